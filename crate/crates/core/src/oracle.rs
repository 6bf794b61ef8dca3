//! Exact machinery for small instances: the optimal `k`-clustering cost and
//! the exact expectation of the potential over every random branch of D^ell
//! sampling. Both enumerate exhaustively behind hard size guards and never
//! fall back to heuristics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{harmonic, single_cluster_ratios, theorem1_bound, BoundInputs, BoundReport};
use crate::error::{Error, Result};
use crate::metric::{costs_against, CenterOrigin, CenterSet, Dataset, MetricSpec};
use crate::scalar::{stable_sum, KahanSum, Scalar};

/// Largest `n` accepted by centroid-mode partition enumeration.
pub const MAX_PARTITION_POINTS: usize = 14;
/// Largest number of center subsets accepted by discrete-mode enumeration.
pub const MAX_CENTER_SUBSETS: f64 = 1e7;
/// Largest number of sampling branches (`n^t`) accepted by exhaustive expectation.
pub const MAX_BRANCHES: f64 = 1e7;

/// Relative slack for inequalities that can hold with equality.
pub const CHECK_GUARD: f64 = 1e-10;

/// How optimal centers are allowed to move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterMode {
    /// Continuous centers; exact for squared euclidean via partition centroids.
    Centroid,
    /// Centers restricted to data points.
    Discrete,
}

impl CenterMode {
    /// Centroid for squared euclidean, discrete otherwise.
    pub fn for_metric<T: Scalar>(metric: &MetricSpec<T>) -> Self {
        if metric.is_euclidean_sq() {
            Self::Centroid
        } else {
            Self::Discrete
        }
    }
}

impl std::str::FromStr for CenterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "centroid" => Ok(Self::Centroid),
            "discrete" => Ok(Self::Discrete),
            other => Err(Error::InvalidParameter(format!("unknown center mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for CenterMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Centroid => "centroid",
            Self::Discrete => "discrete",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalClustering<T> {
    /// Cluster label in `0..k` for each point.
    pub partition: Vec<usize>,
    pub phi_star: T,
    /// One center per label.
    pub centers: CenterSet<T>,
    pub center_mode: CenterMode,
    /// Potential of each cluster about its own center.
    pub cluster_phi: Vec<T>,
}

impl<T: Scalar> OptimalClustering<T> {
    pub fn k(&self) -> usize {
        self.cluster_phi.len()
    }

    /// Point indices of each cluster.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &l) in self.partition.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// `sum_A n_A phi*(A)`, which is at least `2 phi*` because singleton
    /// clusters cost nothing.
    pub fn size_weighted_cost(&self) -> T {
        let sizes = self.clusters();
        stable_sum(
            sizes
                .iter()
                .zip(&self.cluster_phi)
                .map(|(m, &p)| T::from_usize_lossy(m.len()) * p),
        )
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Global optimum of the `k`-clustering potential within `mode`.
pub fn optimal_k_clustering<T: Scalar>(
    ds: &Dataset<T>,
    k: usize,
    metric: &MetricSpec<T>,
    mode: CenterMode,
) -> Result<OptimalClustering<T>> {
    let n = ds.len();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} must satisfy 1 <= k <= n = {n}")));
    }
    match mode {
        CenterMode::Centroid => {
            if !metric.is_euclidean_sq() {
                return Err(Error::InvalidParameter(
                    "centroid mode requires euclidean distance with ell = 2".into(),
                ));
            }
            if n > MAX_PARTITION_POINTS {
                return Err(Error::TooLarge {
                    what: "points for partition enumeration",
                    size: n as f64,
                    limit: MAX_PARTITION_POINTS as f64,
                });
            }
            Ok(optimal_partition(ds, k))
        }
        CenterMode::Discrete => {
            let subsets = binomial(n, k);
            if subsets > MAX_CENTER_SUBSETS {
                return Err(Error::TooLarge {
                    what: "center subsets C(n, k)",
                    size: subsets,
                    limit: MAX_CENTER_SUBSETS,
                });
            }
            Ok(optimal_medoids(ds, k, metric))
        }
    }
}

#[derive(Clone)]
struct Block<T> {
    count: usize,
    mean: Vec<T>,
    sse: T,
}

struct PartitionSearch<'a, T> {
    ds: &'a Dataset<T>,
    k: usize,
    labels: Vec<usize>,
    blocks: Vec<Block<T>>,
    best_cost: T,
    best_labels: Vec<usize>,
}

impl<T: Scalar> PartitionSearch<'_, T> {
    /// Depth-first over restricted-growth strings with exactly `k` blocks.
    /// Partial cost only grows as points are added, so branches whose
    /// partial cost already reaches the incumbent are cut.
    fn descend(&mut self, i: usize, cost: T) {
        let n = self.ds.len();
        if cost >= self.best_cost {
            return;
        }
        if i == n {
            self.best_cost = cost;
            self.best_labels.clone_from(&self.labels);
            return;
        }
        let used = self.blocks.len();
        if n - i < self.k - used {
            return;
        }
        let x = self.ds.point(i);
        for b in 0..used {
            let saved = self.blocks[b].clone();
            let delta = {
                let blk = &mut self.blocks[b];
                let c = T::from_usize_lossy(blk.count);
                let c1 = c + T::one();
                let mut sq = T::zero();
                for (m, &xi) in blk.mean.iter_mut().zip(x) {
                    let d = xi - *m;
                    sq = sq + d * d;
                    *m = *m + d / c1;
                }
                blk.count += 1;
                let delta = c / c1 * sq;
                blk.sse = blk.sse + delta;
                delta
            };
            self.labels[i] = b;
            self.descend(i + 1, cost + delta);
            self.blocks[b] = saved;
        }
        if used < self.k {
            self.blocks.push(Block {
                count: 1,
                mean: x.to_vec(),
                sse: T::zero(),
            });
            self.labels[i] = used;
            self.descend(i + 1, cost);
            self.blocks.pop();
        }
    }
}

fn centroid<T: Scalar>(ds: &Dataset<T>, members: &[usize]) -> Vec<T> {
    let cnt = T::from_usize_lossy(members.len());
    (0..ds.dim())
        .map(|j| stable_sum(members.iter().map(|&i| ds.point(i)[j])) / cnt)
        .collect()
}

fn optimal_partition<T: Scalar>(ds: &Dataset<T>, k: usize) -> OptimalClustering<T> {
    let n = ds.len();
    let mut search = PartitionSearch {
        ds,
        k,
        labels: vec![0; n],
        blocks: Vec::with_capacity(k),
        best_cost: T::infinity(),
        best_labels: vec![0; n],
    };
    search.descend(0, T::zero());
    let partition = search.best_labels;

    let metric = MetricSpec::kmeans();
    let mut members = vec![Vec::new(); k];
    for (i, &l) in partition.iter().enumerate() {
        members[l].push(i);
    }
    let mut centers = CenterSet::empty(ds.dim());
    let mut cluster_phi = Vec::with_capacity(k);
    for m in &members {
        let c = centroid(ds, m);
        cluster_phi.push(stable_sum(m.iter().map(|&i| metric.raw_cost(ds.point(i), &c))));
        centers
            .push(&c, CenterOrigin::Synthetic)
            .expect("centroid has dataset dimension");
    }
    OptimalClustering {
        partition,
        phi_star: stable_sum(cluster_phi.iter().copied()),
        centers,
        center_mode: CenterMode::Centroid,
        cluster_phi,
    }
}

fn optimal_medoids<T: Scalar>(ds: &Dataset<T>, k: usize, metric: &MetricSpec<T>) -> OptimalClustering<T> {
    let n = ds.len();
    let cost: Vec<Vec<T>> = ds
        .points()
        .map(|x| ds.points().map(|c| metric.raw_cost(x, c)).collect())
        .collect();
    let mut combo: Vec<usize> = (0..k).collect();
    let mut best_cost = T::infinity();
    let mut best = combo.clone();
    loop {
        let phi = stable_sum(
            cost.iter()
                .map(|row| combo.iter().map(|&j| row[j]).fold(T::infinity(), T::min)),
        );
        if phi < best_cost {
            best_cost = phi;
            best.clone_from(&combo);
        }
        // next combination in lexicographic order
        let Some(pos) = (0..k).rev().find(|&p| combo[p] < n - k + p) else {
            break;
        };
        combo[pos] += 1;
        for p in pos + 1..k {
            combo[p] = combo[p - 1] + 1;
        }
    }
    let centers = CenterSet::from_indices(ds, &best).expect("indices in range");
    let mut partition = Vec::with_capacity(n);
    let mut per_cluster = vec![KahanSum::new(); k];
    for row in &cost {
        let mut owner = (0, T::infinity());
        for (l, &j) in best.iter().enumerate() {
            if row[j] < owner.1 {
                owner = (l, row[j]);
            }
        }
        partition.push(owner.0);
        per_cluster[owner.0].add(owner.1);
    }
    let cluster_phi: Vec<T> = per_cluster.iter().map(KahanSum::value).collect();
    OptimalClustering {
        partition,
        phi_star: stable_sum(cluster_phi.iter().copied()),
        centers,
        center_mode: CenterMode::Discrete,
        cluster_phi,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectationReport<T> {
    pub expected_phi: T,
    /// Number of leaves of the enumeration tree.
    pub branch_count: u64,
    pub max_depth: usize,
    /// Sum of leaf probabilities; one up to rounding.
    pub probability_mass: T,
}

#[derive(Clone, Copy)]
struct Accum<T> {
    weighted: KahanSum<T>,
    mass: KahanSum<T>,
    leaves: u64,
    depth: usize,
}

impl<T: Scalar> Accum<T> {
    fn new() -> Self {
        Self {
            weighted: KahanSum::new(),
            mass: KahanSum::new(),
            leaves: 0,
            depth: 0,
        }
    }

    fn merge(&mut self, other: &Self) {
        self.weighted.add(other.weighted.value());
        self.mass.add(other.mass.value());
        self.leaves += other.leaves;
        self.depth = self.depth.max(other.depth);
    }
}

fn with_center<T: Scalar>(ds: &Dataset<T>, costs: &[T], c: usize, metric: &MetricSpec<T>) -> Vec<T> {
    let center = ds.point(c);
    costs
        .iter()
        .zip(ds.points())
        .map(|(&old, x)| old.min(metric.raw_cost(x, center)))
        .collect()
}

fn expand<T: Scalar>(ds: &Dataset<T>, metric: &MetricSpec<T>, costs: &[T], remaining: usize, depth: usize, prob: T, acc: &mut Accum<T>) {
    let total = stable_sum(costs.iter().copied());
    // zero residual cost: every continuation keeps phi = 0
    if remaining == 0 || total <= T::zero() {
        acc.weighted.add(prob * total);
        acc.mass.add(prob);
        acc.leaves += 1;
        acc.depth = acc.depth.max(depth);
        return;
    }
    for (i, &c) in costs.iter().enumerate() {
        if c <= T::zero() {
            continue;
        }
        let next = with_center(ds, costs, i, metric);
        expand(ds, metric, &next, remaining - 1, depth + 1, prob * (c / total), acc);
    }
}

/// Exact `E[phi]` after `t` picks of D^ell sampling, by enumerating every
/// center sequence weighted by its probability.
///
/// Without initial centers the first pick is uniform over the points and
/// the remaining `t - 1` are D^ell weighted. With a nonempty `initial` set
/// all `t` picks are D^ell weighted against the existing centers.
pub fn exhaustive_expected_phi<T: Scalar>(
    ds: &Dataset<T>,
    t: usize,
    metric: &MetricSpec<T>,
    initial: Option<&CenterSet<T>>,
) -> Result<ExpectationReport<T>> {
    let n = ds.len();
    let branches = (n as f64).powi(t as i32);
    if branches > MAX_BRANCHES {
        return Err(Error::TooLarge {
            what: "sampling branches n^t",
            size: branches,
            limit: MAX_BRANCHES,
        });
    }
    let initial = initial.filter(|c| !c.is_empty());
    let acc = match initial {
        Some(cs) => {
            if cs.dim() != ds.dim() {
                return Err(Error::DimensionMismatch {
                    expected: ds.dim(),
                    got: cs.dim(),
                });
            }
            let costs = costs_against(ds, cs, metric);
            let total = stable_sum(costs.iter().copied());
            if t == 0 || total <= T::zero() {
                let mut acc = Accum::new();
                expand(ds, metric, &costs, t, 0, T::one(), &mut acc);
                acc
            } else {
                let first: Vec<(usize, T)> = costs.iter().copied().enumerate().filter(|(_, c)| *c > T::zero()).collect();
                parallel_branches(ds, metric, &costs, &first, total, t)
            }
        }
        None => {
            if t == 0 {
                return Err(Error::InvalidParameter(
                    "at least one pick is needed without initial centers".into(),
                ));
            }
            let infinite = vec![T::infinity(); n];
            let first: Vec<(usize, T)> = (0..n).map(|i| (i, T::one())).collect();
            parallel_branches(ds, metric, &infinite, &first, T::from_usize_lossy(n), t)
        }
    };
    Ok(ExpectationReport {
        expected_phi: acc.weighted.value(),
        branch_count: acc.leaves,
        max_depth: acc.depth,
        probability_mass: acc.mass.value(),
    })
}

/// Expands the first pick in parallel; subtree results are merged in index
/// order so the total is independent of scheduling.
fn parallel_branches<T: Scalar>(ds: &Dataset<T>, metric: &MetricSpec<T>, costs: &[T], first: &[(usize, T)], total: T, t: usize) -> Accum<T> {
    let parts: Vec<Accum<T>> = first
        .par_iter()
        .map(|&(i, w)| {
            let mut acc = Accum::new();
            let next = with_center(ds, costs, i, metric);
            expand(ds, metric, &next, t - 1, 1, w / total, &mut acc);
            acc
        })
        .collect();
    let mut acc = Accum::new();
    for p in &parts {
        acc.merge(p);
    }
    acc
}

/// Exact single-cluster check: expected potential after one pick against
/// `ratio * phi*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingleClusterCheck<T> {
    pub expected_phi: T,
    pub phi_star: T,
    pub bound: T,
    pub mode: CenterMode,
    pub holds: bool,
    /// True in centroid mode, where `phi*` is the exact continuous optimum
    /// and the inequality is a theorem; discrete-mode results are reported only.
    pub asserted: bool,
}

fn single_cluster_check<T: Scalar>(
    cluster: &Dataset<T>,
    metric: &MetricSpec<T>,
    initial: Option<&CenterSet<T>>,
    use_rd: bool,
) -> Result<SingleClusterCheck<T>> {
    let mode = CenterMode::for_metric(metric);
    let opt = optimal_k_clustering(cluster, 1, metric, mode)?;
    let e = exhaustive_expected_phi(cluster, 1, metric, initial)?;
    let r = single_cluster_ratios(metric.ell(), metric.is_euclidean_sq())?;
    let bound = if use_rd { r.r_d } else { r.r_u } * opt.phi_star;
    Ok(SingleClusterCheck {
        expected_phi: e.expected_phi,
        phi_star: opt.phi_star,
        bound,
        mode,
        holds: within(e.expected_phi, bound),
        asserted: mode == CenterMode::Centroid,
    })
}

fn within<T: Scalar>(value: T, bound: T) -> bool {
    value <= bound + T::lit(CHECK_GUARD) * T::one().max(bound.abs())
}

/// Uniform first center inside a single cluster: `E[phi(A)] <= r_u phi*(A)`.
pub fn check_uniform_pick<T: Scalar>(cluster: &Dataset<T>, metric: &MetricSpec<T>) -> Result<SingleClusterCheck<T>> {
    single_cluster_check(cluster, metric, None, false)
}

/// One D^ell pick inside a cluster given existing centers:
/// `E[phi'(A)] <= r_D phi*(A)`.
pub fn check_weighted_pick<T: Scalar>(
    cluster: &Dataset<T>,
    initial: &CenterSet<T>,
    metric: &MetricSpec<T>,
) -> Result<SingleClusterCheck<T>> {
    if initial.is_empty() {
        return Err(Error::EmptyCenters);
    }
    single_cluster_check(cluster, metric, Some(initial), true)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma4Report<T> {
    pub t: usize,
    pub u: usize,
    pub mode: CenterMode,
    pub expected_phi: T,
    pub phi_covered: T,
    pub phi_uncovered: T,
    pub rho_uncovered: T,
    /// `(1+H_t) phi(V) + (1+H_{t-1}) rho(U) + (u-t)/u phi(U)`.
    pub bound: T,
    pub holds: bool,
    /// `sum over uncovered A of phi(A) rho(A)`.
    pub inner_product: T,
    /// `phi(U) rho(U)`.
    pub inner_product_bound: T,
    pub inner_product_holds: bool,
}

/// Exact check of the covered/uncovered potential bound after `t <= u`
/// D^ell picks, with `rho = r_D phi*` taken per optimal cluster.
///
/// A cluster is covered when one of the initial centers is one of its
/// points; synthetic centers cover nothing.
pub fn verify_lemma4<T: Scalar>(
    ds: &Dataset<T>,
    k: usize,
    initial: &CenterSet<T>,
    t: usize,
    metric: &MetricSpec<T>,
) -> Result<Lemma4Report<T>> {
    if initial.is_empty() {
        return Err(Error::EmptyCenters);
    }
    let mode = CenterMode::for_metric(metric);
    let opt = optimal_k_clustering(ds, k, metric, mode)?;
    let mut covered = vec![false; k];
    for origin in initial.origins() {
        if let CenterOrigin::DataIndex(i) = *origin {
            if i >= ds.len() {
                return Err(Error::IndexOutOfRange { index: i, len: ds.len() });
            }
            covered[opt.partition[i]] = true;
        }
    }
    let u = covered.iter().filter(|c| !**c).count();
    if t > u {
        return Err(Error::InvalidParameter(format!(
            "t = {t} picks exceed the u = {u} uncovered clusters"
        )));
    }
    let r_d = single_cluster_ratios(metric.ell(), metric.is_euclidean_sq())?.r_d;
    let costs = costs_against(ds, initial, metric);
    let clusters = opt.clusters();
    let mut phi_v = KahanSum::new();
    let mut phi_u = KahanSum::new();
    let mut rho_u = KahanSum::new();
    let mut inner = KahanSum::new();
    for (a, members) in clusters.iter().enumerate() {
        let phi_a = stable_sum(members.iter().map(|&i| costs[i]));
        if covered[a] {
            phi_v.add(phi_a);
        } else {
            let rho_a = r_d * opt.cluster_phi[a];
            phi_u.add(phi_a);
            rho_u.add(rho_a);
            inner.add(phi_a * rho_a);
        }
    }
    let (phi_v, phi_u, rho_u, inner) = (phi_v.value(), phi_u.value(), rho_u.value(), inner.value());

    let expected = exhaustive_expected_phi(ds, t, metric, Some(initial))?.expected_phi;
    let one = T::one();
    let uncovered_share = if u == 0 {
        T::zero()
    } else {
        T::from_usize_lossy(u - t) / T::from_usize_lossy(u)
    };
    let bound = (one + harmonic::<T>(t as i64)?) * phi_v
        + (one + harmonic::<T>(t as i64 - 1)?) * rho_u
        + uncovered_share * phi_u;
    let inner_bound = phi_u * rho_u;
    Ok(Lemma4Report {
        t,
        u,
        mode,
        expected_phi: expected,
        phi_covered: phi_v,
        phi_uncovered: phi_u,
        rho_uncovered: rho_u,
        bound,
        holds: within(expected, bound),
        inner_product: inner,
        inner_product_bound: inner_bound,
        inner_product_holds: within(inner, inner_bound),
    })
}

/// Exact expected approximation ratio of `t`-center D^ell sampling against
/// the optimal `k`-clustering, next to the bi-criteria bound at `beta = t/k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioCheck<T> {
    pub k: usize,
    pub t: usize,
    pub mode: CenterMode,
    pub phi_star: T,
    pub expected_phi: T,
    /// `expected_phi / phi_star`; NaN when `phi_star = 0`.
    pub ratio: T,
    pub bound: BoundReport<T>,
    pub holds: bool,
}

pub fn exhaustive_ratio<T: Scalar>(ds: &Dataset<T>, k: usize, t: usize, metric: &MetricSpec<T>) -> Result<RatioCheck<T>> {
    if t < k {
        return Err(Error::InvalidParameter(format!("t = {t} must be at least k = {k}")));
    }
    let mode = CenterMode::for_metric(metric);
    let opt = optimal_k_clustering(ds, k, metric, mode)?;
    let e = exhaustive_expected_phi(ds, t, metric, None)?;
    let beta = T::from_usize_lossy(t) / T::from_usize_lossy(k);
    let inputs = BoundInputs::new(k as u64, beta, metric.ell(), metric.is_euclidean_sq())?.with_n(ds.len() as u64);
    let bound = theorem1_bound(&inputs)?;
    let ratio = if opt.phi_star > T::zero() {
        e.expected_phi / opt.phi_star
    } else {
        T::nan()
    };
    let holds = if opt.phi_star > T::zero() {
        within(ratio, bound.theorem1)
    } else {
        e.expected_phi <= T::zero()
    };
    Ok(RatioCheck {
        k,
        t,
        mode,
        phi_star: opt.phi_star,
        expected_phi: e.expected_phi,
        ratio,
        bound,
        holds,
    })
}
