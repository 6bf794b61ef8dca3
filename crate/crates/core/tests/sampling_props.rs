use dlsample::oracle::exhaustive_expected_phi;
use dlsample::sampler::pick_weighted;
use dlsample::{d_ell_sample, potential, CenterSet, Dataset, MetricKind, MetricSpec, SamplerConfig};
use proptest::prelude::*;

fn metric_strategy() -> impl Strategy<Value = MetricSpec<f64>> {
    (prop_oneof![Just(MetricKind::Euclidean), Just(MetricKind::Manhattan)], prop_oneof![Just(1.0), Just(1.5), Just(2.0), Just(3.0)])
        .prop_map(|(kind, ell)| MetricSpec::new(kind, ell).unwrap())
}

fn points(n: std::ops::RangeInclusive<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0..10.0_f64, d), n)
}

fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..=3).prop_flat_map(|d| (points(1..=10, d), points(1..=4, d), prop::collection::vec(-10.0..10.0_f64, d)))
}

proptest! {
    #[test]
    fn adding_a_center_never_increases_potential((pts, centers, extra) in instance(), m in metric_strategy()) {
        let ds = Dataset::new(pts).unwrap();
        let mut cs = CenterSet::from_points(centers).unwrap();
        let (before, _) = potential(&ds, &cs, &m).unwrap();
        cs.push(&extra, dlsample::metric::CenterOrigin::Synthetic).unwrap();
        let (after, _) = potential(&ds, &cs, &m).unwrap();
        prop_assert!(after <= before, "{after} > {before}");
    }

    #[test]
    fn potential_ignores_ordering((pts, centers, _) in instance(), m in metric_strategy(), seed in any::<u64>()) {
        let ds = Dataset::new(pts.clone()).unwrap();
        let cs = CenterSet::from_points(centers.clone()).unwrap();
        let (phi, _) = potential(&ds, &cs, &m).unwrap();

        let mut rng = <rand_xoshiro::Xoshiro256PlusPlus as rand::SeedableRng>::seed_from_u64(seed);
        let mut p2 = pts;
        let mut c2 = centers;
        rand::seq::SliceRandom::shuffle(p2.as_mut_slice(), &mut rng);
        rand::seq::SliceRandom::shuffle(c2.as_mut_slice(), &mut rng);
        let (phi2, _) = potential(&Dataset::new(p2).unwrap(), &CenterSet::from_points(c2).unwrap(), &m).unwrap();
        prop_assert_eq!(phi.to_bits(), phi2.to_bits());
    }

    #[test]
    fn centroid_minimizes_squared_distance(
        pts in (1usize..=3).prop_flat_map(|d| points(1..=10, d)),
        delta in -1.0..1.0_f64,
        axis in 0usize..3,
    ) {
        let d = pts[0].len();
        let n = pts.len() as f64;
        let centroid: Vec<f64> = (0..d).map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / n).collect();
        let ds = Dataset::new(pts).unwrap();
        let m = MetricSpec::kmeans();
        let at = |c: Vec<f64>| potential(&ds, &CenterSet::from_points(vec![c]).unwrap(), &m).unwrap().0;
        let best = at(centroid.clone());
        let mut moved = centroid;
        moved[axis % d] += delta;
        // phi(c + e) = phi(c) + n |e|^2 exactly in real arithmetic
        let shifted = at(moved);
        prop_assert!(shifted >= best - 1e-9 * best.max(1.0));
        prop_assert!((shifted - best - n * delta * delta).abs() <= 1e-9 * shifted.max(1.0));
    }

    #[test]
    fn sampling_trace_invariants(
        pts in (1usize..=3).prop_flat_map(|d| points(1..=12, d)),
        m in metric_strategy(),
        seed in any::<u64>(),
        frac in 0.0..1.0_f64,
    ) {
        let n = pts.len();
        let t = 1 + ((n - 1) as f64 * frac) as usize;
        let ds = Dataset::new(pts).unwrap();
        let tr = d_ell_sample(&ds, &SamplerConfig::new(t, seed, m)).unwrap();
        prop_assert_eq!(tr.chosen.len(), t);
        prop_assert!(tr.phi_after.windows(2).all(|w| w[1] <= w[0]));
        let mut sorted = tr.chosen.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), t);
        // the trace agrees with a from-scratch evaluation
        let (phi, _) = potential(&ds, &CenterSet::from_indices(&ds, &tr.chosen).unwrap(), &m).unwrap();
        prop_assert!((phi - tr.final_phi()).abs() <= 1e-12 * phi.max(1.0));
    }

    #[test]
    fn all_points_chosen_gives_zero(n in 1usize..=10, seed in any::<u64>(), m in metric_strategy()) {
        // distinct points on a line
        let ds = Dataset::from_scalars(&(0..n).map(|i| i as f64 * 1.5).collect::<Vec<_>>()).unwrap();
        let tr = d_ell_sample(&ds, &SamplerConfig::new(n, seed, m)).unwrap();
        prop_assert_eq!(tr.final_phi(), 0.0);
        prop_assert!(!tr.degenerate);
    }

    #[test]
    fn weighted_pick_never_returns_zero_cost(
        costs in prop::collection::vec(prop_oneof![Just(0.0), 0.0..5.0_f64], 1..10),
        u in 0.0..1.0_f64,
    ) {
        match pick_weighted(&costs, u) {
            Some(i) => prop_assert!(costs[i] > 0.0),
            None => prop_assert!(costs.iter().all(|&c| c == 0.0)),
        }
    }

    #[test]
    fn exhaustive_mass_and_monotonicity(
        pts in (1usize..=2).prop_flat_map(|d| points(2..=6, d)),
        m in metric_strategy(),
        t in 2usize..=3,
    ) {
        let t = t.min(pts.len());
        let ds = Dataset::new(pts).unwrap();
        let more = exhaustive_expected_phi(&ds, t, &m, None).unwrap();
        let fewer = exhaustive_expected_phi(&ds, t - 1, &m, None).unwrap();
        prop_assert!((more.probability_mass - 1.0).abs() <= 1e-10);
        prop_assert!((fewer.probability_mass - 1.0).abs() <= 1e-10);
        prop_assert!(more.expected_phi <= fewer.expected_phi * (1.0 + 1e-12));
    }
}

/// Second-center frequencies over 10^5 seeds against the exact D^2
/// selection probabilities on `{0, 1, 2, 10}`.
#[test]
fn second_center_frequencies_match_d2_weights() {
    let xs = [0.0, 1.0, 2.0, 10.0_f64];
    let ds = Dataset::from_scalars(&xs).unwrap();
    let n_runs = 100_000;
    let mut pair_counts = [[0u32; 4]; 4];
    for seed in 0..n_runs {
        let tr = d_ell_sample(&ds, &SamplerConfig::new(2, seed, MetricSpec::kmeans())).unwrap();
        pair_counts[tr.chosen[0]][tr.chosen[1]] += 1;
    }

    // exact pair probabilities: uniform first pick, then cost / total
    let mut p = [[0.0; 4]; 4];
    for i in 0..4 {
        let costs: Vec<f64> = xs.iter().map(|x| (x - xs[i]).powi(2)).collect();
        let total: f64 = costs.iter().sum();
        for j in 0..4 {
            p[i][j] = 0.25 * costs[j] / total;
        }
    }

    let n = n_runs as f64;
    let mut chi2 = 0.0;
    let mut cells = 0;
    for i in 0..4 {
        assert_eq!(pair_counts[i][i], 0);
        for j in 0..4 {
            if p[i][j] > 0.0 {
                let expected = n * p[i][j];
                chi2 += (pair_counts[i][j] as f64 - expected).powi(2) / expected;
                cells += 1;
            }
        }
    }
    // 11 degrees of freedom; 31.26 is the 0.999 quantile
    assert_eq!(cells, 12);
    assert!(chi2 < 31.26, "chi2 = {chi2}");

    for j in 0..4 {
        let pj: f64 = (0..4).map(|i| p[i][j]).sum();
        let fj = (0..4).map(|i| pair_counts[i][j]).sum::<u32>() as f64 / n;
        let se = (pj * (1.0 - pj) / n).sqrt();
        assert!((fj - pj).abs() <= 3.0 * se, "center {j}: {fj} vs {pj} (se {se})");
    }
}

/// Monte Carlo mean of the sampled potential against the exact expectation.
#[test]
fn sampled_mean_matches_exhaustive_expectation() {
    let ds = Dataset::new(vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![4.0, 4.0], vec![5.0, 3.0], vec![-3.0, 2.0]]).unwrap();
    for m in [MetricSpec::kmeans(), MetricSpec::kmedians()] {
        let exact = exhaustive_expected_phi(&ds, 3, &m, None).unwrap().expected_phi;
        let runs = 20_000;
        let phis: Vec<f64> = (0..runs)
            .map(|s| d_ell_sample(&ds, &SamplerConfig::new(3, s, m)).unwrap().final_phi())
            .collect();
        let mean = phis.iter().sum::<f64>() / runs as f64;
        let var = phis.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
        let se = (var / runs as f64).sqrt();
        assert!((mean - exact).abs() <= 4.0 * se, "mean {mean} vs exact {exact} (se {se})");
    }
}
