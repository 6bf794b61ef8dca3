//! Seeded D^ell sampling and optional Lloyd refinement.
//!
//! # Randomness
//!
//! Every random draw comes from [`SampleRng`]: xoshiro256++ whose 256-bit
//! state is expanded from the 64-bit seed with SplitMix64 (the reference
//! seeding procedure of the xoshiro authors). A unit draw takes the top 53
//! bits of the next output, `u = (x >> 11) * 2^-53`, which lies in `[0, 1)`.
//! A uniform index in `0..m` is `floor(u * m)`.
//!
//! # Weighted pick
//!
//! Given nonnegative costs, draw `u`, walk the cumulative sums in ascending
//! point order and return the first point with positive cost whose
//! normalized cumulative mass is `>= u`. Zero-cost points (already chosen
//! centers and their duplicates) can never be returned.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::metric::{assign, CenterOrigin, CenterSet, Dataset, MetricSpec};
use crate::scalar::{stable_sum, KahanSum, Scalar};

/// The documented generator behind every sampling run.
#[derive(Debug, Clone)]
pub struct SampleRng(Xoshiro256PlusPlus);

impl SampleRng {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..m`; `m` must be positive.
    pub fn next_index(&mut self, m: usize) -> usize {
        debug_assert!(m > 0);
        ((self.next_unit() * m as f64) as usize).min(m - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig<T> {
    /// Number of centers to select.
    pub t: usize,
    pub seed: u64,
    pub metric: MetricSpec<T>,
    /// Lloyd rounds run after seeding; zero disables refinement.
    pub lloyd_iters: usize,
}

impl<T: Scalar> SamplerConfig<T> {
    pub fn new(t: usize, seed: u64, metric: MetricSpec<T>) -> Self {
        Self {
            t,
            seed,
            metric,
            lloyd_iters: 0,
        }
    }

    pub fn with_lloyd(mut self, iters: usize) -> Self {
        self.lloyd_iters = iters;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingTrace<T> {
    /// Data indices in selection order.
    pub chosen: Vec<usize>,
    /// Potential immediately after each selection.
    pub phi_after: Vec<T>,
    /// Chosen centers, or the Lloyd-refined centers when refinement ran.
    pub final_centers: CenterSet<T>,
    /// Set when the residual cost reached zero before `t` picks and the
    /// remaining centers were drawn uniformly from unchosen points.
    pub degenerate: bool,
    /// Potential of the refined centers, when Lloyd refinement ran.
    pub refined_phi: Option<T>,
}

impl<T: Scalar> SamplingTrace<T> {
    /// Potential of the seeding (before any refinement).
    pub fn final_phi(&self) -> T {
        *self.phi_after.last().expect("trace has at least one step")
    }
}

/// Normalized selection probabilities `cost_i / sum(cost)`.
pub fn selection_distribution<T: Scalar>(costs: &[T]) -> Result<Vec<T>> {
    if let Some(c) = costs.iter().find(|c| !(**c >= T::zero()) || !c.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "costs must be finite and nonnegative, got {c}"
        )));
    }
    let total = stable_sum(costs.iter().copied());
    if total <= T::zero() {
        return Err(Error::ZeroMass);
    }
    Ok(costs.iter().map(|&c| c / total).collect())
}

/// Weighted pick by cumulative mass in ascending index order. Returns `None`
/// when every cost is zero.
pub fn pick_weighted<T: Scalar>(costs: &[T], unit: T) -> Option<usize> {
    let total = costs.iter().fold(T::zero(), |acc, &c| acc + c);
    if !(total > T::zero()) {
        return None;
    }
    let mut cum = T::zero();
    let mut last_positive = None;
    for (i, &c) in costs.iter().enumerate() {
        if c <= T::zero() {
            continue;
        }
        cum = cum + c;
        last_positive = Some(i);
        if cum / total >= unit {
            return Some(i);
        }
    }
    last_positive
}

fn update_costs<T: Scalar>(costs: &mut [T], ds: &Dataset<T>, center: &[T], metric: &MetricSpec<T>) {
    for (c, x) in costs.iter_mut().zip(ds.points()) {
        let d = metric.raw_cost(x, center);
        if d < *c {
            *c = d;
        }
    }
}

/// Selects `cfg.t` centers from `ds` by D^ell sampling.
///
/// The first center is uniform over all points; each later center is drawn
/// with probability proportional to its current cost. Costs are updated
/// incrementally, `O(n d)` per center.
pub fn d_ell_sample<T: Scalar>(ds: &Dataset<T>, cfg: &SamplerConfig<T>) -> Result<SamplingTrace<T>> {
    let n = ds.len();
    if cfg.t == 0 || cfg.t > n {
        return Err(Error::InvalidParameter(format!(
            "number of centers t = {} must satisfy 1 <= t <= n = {n}",
            cfg.t
        )));
    }
    if cfg.lloyd_iters > 0 && !cfg.metric.is_euclidean_sq() {
        return Err(Error::InvalidParameter(
            "Lloyd refinement requires euclidean distance with ell = 2".into(),
        ));
    }

    let metric = &cfg.metric;
    let mut rng = SampleRng::new(cfg.seed);
    let mut is_chosen = vec![false; n];
    let mut chosen = Vec::with_capacity(cfg.t);
    let mut phi_after = Vec::with_capacity(cfg.t);
    let mut centers = CenterSet::empty(ds.dim());
    let mut degenerate = false;

    let first = rng.next_index(n);
    let mut costs: Vec<T> = ds.points().map(|x| metric.raw_cost(x, ds.point(first))).collect();
    is_chosen[first] = true;
    chosen.push(first);
    centers.push_data_point(ds, first)?;
    phi_after.push(stable_sum(costs.iter().copied()));

    while chosen.len() < cfg.t {
        let unit = T::lit(rng.next_unit());
        let next = match pick_weighted(&costs, unit) {
            Some(i) => i,
            None => {
                degenerate = true;
                let unchosen: Vec<usize> = (0..n).filter(|&i| !is_chosen[i]).collect();
                unchosen[rng.next_index(unchosen.len())]
            }
        };
        update_costs(&mut costs, ds, ds.point(next), metric);
        is_chosen[next] = true;
        chosen.push(next);
        centers.push_data_point(ds, next)?;
        phi_after.push(stable_sum(costs.iter().copied()));
    }

    let (final_centers, refined_phi) = if cfg.lloyd_iters > 0 {
        let refined = lloyd_refine(ds, &centers, cfg.lloyd_iters)?;
        let phi = assign(ds, &refined, metric)?.phi();
        (refined, Some(phi))
    } else {
        (centers, None)
    };

    Ok(SamplingTrace {
        chosen,
        phi_after,
        final_centers,
        degenerate,
        refined_phi,
    })
}

/// Lloyd's algorithm under squared euclidean distance.
///
/// Each round assigns points to their nearest center and moves every center
/// to the centroid of its points. Stops after `iters` rounds or once the
/// assignment no longer changes. A center that owns no points keeps its
/// position for that round.
pub fn lloyd_refine<T: Scalar>(ds: &Dataset<T>, cs: &CenterSet<T>, iters: usize) -> Result<CenterSet<T>> {
    let metric = MetricSpec::<T>::kmeans();
    let mut centers = cs.clone();
    if iters == 0 {
        return Ok(centers);
    }
    // validates dimensions and non-emptiness
    let mut previous: Option<Vec<usize>> = None;
    for _ in 0..iters {
        let a = assign(ds, &centers, &metric)?;
        if previous.as_ref() == Some(&a.owner) {
            break;
        }
        let k = centers.len();
        let d = ds.dim();
        let mut sums = vec![vec![KahanSum::<T>::new(); d]; k];
        let mut counts = vec![0usize; k];
        for (x, &j) in ds.points().zip(&a.owner) {
            counts[j] += 1;
            for (acc, &c) in sums[j].iter_mut().zip(x) {
                acc.add(c);
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let cnt = T::from_usize_lossy(counts[j]);
            let centroid: Vec<T> = sums[j].iter().map(|s| s.value() / cnt).collect();
            if centroid.as_slice() != centers.center(j) {
                centers.set_center(j, &centroid, CenterOrigin::Synthetic);
            }
        }
        previous = Some(a.owner);
    }
    Ok(centers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::potential;

    fn kmeans() -> MetricSpec<f64> {
        MetricSpec::kmeans()
    }

    #[test]
    fn rng_unit_range_and_determinism() {
        let mut a = SampleRng::new(42);
        let mut b = SampleRng::new(42);
        for _ in 0..1000 {
            let u = a.next_unit();
            assert!((0.0..1.0).contains(&u));
            assert_eq!(u.to_bits(), b.next_unit().to_bits());
        }
        assert_ne!(SampleRng::new(1).next_u64(), SampleRng::new(2).next_u64());
    }

    #[test]
    fn selection_distribution_examples() {
        assert_eq!(selection_distribution(&[1.0, 1.0, 2.0]).unwrap(), vec![0.25, 0.25, 0.5]);
        assert_eq!(selection_distribution(&[0.0, 5.0]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(selection_distribution(&[3.0]).unwrap(), vec![1.0]);
        assert!(matches!(selection_distribution(&[0.0, 0.0]), Err(Error::ZeroMass)));
        assert!(selection_distribution(&[-1.0, 2.0]).is_err());
    }

    #[test]
    fn weighted_pick_skips_zero_mass() {
        let costs = [0.0, 1.0, 0.0, 3.0];
        assert_eq!(pick_weighted(&costs, 0.0), Some(1));
        assert_eq!(pick_weighted(&costs, 0.25), Some(1));
        assert_eq!(pick_weighted(&costs, 0.2500001), Some(3));
        assert_eq!(pick_weighted(&costs, 0.999_999_9), Some(3));
        assert_eq!(pick_weighted(&[0.0, 0.0], 0.5), None);
    }

    #[test]
    fn single_point() {
        let ds = Dataset::from_scalars(&[3.0]).unwrap();
        let tr = d_ell_sample(&ds, &SamplerConfig::new(1, 9, kmeans())).unwrap();
        assert_eq!(tr.chosen, vec![0]);
        assert_eq!(tr.phi_after, vec![0.0]);
        assert!(!tr.degenerate);
    }

    #[test]
    fn duplicate_forces_opposite_location() {
        let ds = Dataset::from_scalars(&[0.0, 0.0, 10.0]).unwrap();
        for seed in 0..200 {
            let tr = d_ell_sample(&ds, &SamplerConfig::new(2, seed, kmeans())).unwrap();
            assert_eq!(tr.final_phi(), 0.0, "seed {seed}");
            let locs: Vec<f64> = tr.chosen.iter().map(|&i| ds.point(i)[0]).collect();
            assert_ne!(locs[0], locs[1]);
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let ds = Dataset::from_scalars(&[0.0, 1.0, 2.0, 10.0]).unwrap();
        let cfg = SamplerConfig::new(2, 1234, kmeans());
        let a = d_ell_sample(&ds, &cfg).unwrap();
        let b = d_ell_sample(&ds, &cfg).unwrap();
        assert_eq!(a.chosen, b.chosen);
        let bits = |t: &SamplingTrace<f64>| t.phi_after.iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn t_out_of_range() {
        let ds = Dataset::from_scalars(&[0.0, 1.0]).unwrap();
        assert!(d_ell_sample(&ds, &SamplerConfig::new(3, 0, kmeans())).is_err());
        assert!(d_ell_sample(&ds, &SamplerConfig::new(0, 0, kmeans())).is_err());
    }

    #[test]
    fn degenerate_input_is_flagged_and_total() {
        let ds = Dataset::from_scalars(&[5.0, 5.0, 5.0]).unwrap();
        let tr = d_ell_sample(&ds, &SamplerConfig::new(3, 7, kmeans())).unwrap();
        assert!(tr.degenerate);
        let mut sorted = tr.chosen.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
        assert_eq!(tr.phi_after, vec![0.0; 3]);
    }

    #[test]
    fn lloyd_requires_kmeans_metric() {
        let ds = Dataset::from_scalars(&[0.0, 1.0]).unwrap();
        let cfg = SamplerConfig::new(1, 0, MetricSpec::kmedians()).with_lloyd(2);
        assert!(d_ell_sample(&ds, &cfg).is_err());
    }

    #[test]
    fn lloyd_examples() {
        let ds = Dataset::from_scalars(&[0.0, 2.0]).unwrap();
        let cs = CenterSet::from_points(vec![vec![1.9]]).unwrap();
        assert_eq!(lloyd_refine(&ds, &cs, 0).unwrap(), cs);
        let refined = lloyd_refine(&ds, &cs, 1).unwrap();
        assert_eq!(refined.center(0), &[1.0]);
        assert_eq!(refined.origins()[0], CenterOrigin::Synthetic);
    }

    #[test]
    fn lloyd_keeps_empty_cluster_center() {
        let ds = Dataset::from_scalars(&[0.0, 1.0]).unwrap();
        let cs = CenterSet::from_points(vec![vec![0.5], vec![100.0]]).unwrap();
        let refined = lloyd_refine(&ds, &cs, 3).unwrap();
        assert_eq!(refined.center(1), &[100.0]);
    }

    #[test]
    fn sampling_with_lloyd_reports_refined_potential() {
        let ds = Dataset::from_scalars(&[0.0, 1.0, 2.0, 10.0, 11.0, 12.0]).unwrap();
        let cfg = SamplerConfig::new(2, 3, kmeans()).with_lloyd(10);
        let tr = d_ell_sample(&ds, &cfg).unwrap();
        let refined = tr.refined_phi.unwrap();
        assert!(refined <= tr.final_phi() * (1.0 + 1e-12));
        assert_eq!(potential(&ds, &tr.final_centers, &kmeans()).unwrap().0, refined);
    }
}
