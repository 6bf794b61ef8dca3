//! Points, centers, distances and the clustering potential.
//!
//! The potential of a center set is `sum_i min_j D(x_i, c_j)^ell`. Nearest
//! center ties go to the smallest center index, and all sums use compensated
//! accumulation so potentials are reproducible to roughly machine precision
//! independent of point count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{stable_sum, Scalar};

/// An immutable set of `n >= 1` points in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    coords: Vec<T>,
    dim: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(points: Vec<Vec<T>>) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyDataset)?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite { point: i });
            }
            coords.extend_from_slice(p);
        }
        Ok(Self { coords, dim })
    }

    /// Builds a one-dimensional dataset.
    pub fn from_scalars(values: &[T]) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect())
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Restriction to the given indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let n = self.len();
        let mut points = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            points.push(self.point(i).to_vec());
        }
        Self::new(points)
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.points().map(<[T]>::to_vec).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Euclidean,
    Manhattan,
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Self::Euclidean),
            "manhattan" => Ok(Self::Manhattan),
            other => Err(Error::InvalidMetric(format!("unknown metric kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Euclidean => "euclidean",
            Self::Manhattan => "manhattan",
        })
    }
}

/// A metric together with the exponent `ell >= 1` applied to distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSpec<T> {
    kind: MetricKind,
    ell: T,
}

impl<T: Scalar> MetricSpec<T> {
    pub fn new(kind: MetricKind, ell: T) -> Result<Self> {
        if !(ell >= T::one()) || !ell.is_finite() {
            return Err(Error::InvalidMetric(format!(
                "exponent ell must be a finite real >= 1, got {ell}"
            )));
        }
        Ok(Self { kind, ell })
    }

    /// Squared euclidean distance: the k-means potential.
    pub fn kmeans() -> Self {
        Self {
            kind: MetricKind::Euclidean,
            ell: T::lit(2.0),
        }
    }

    /// Plain euclidean distance: the k-medians potential.
    pub fn kmedians() -> Self {
        Self {
            kind: MetricKind::Euclidean,
            ell: T::one(),
        }
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn ell(&self) -> T {
        self.ell
    }

    /// True for euclidean distance with `ell == 2`.
    pub fn is_euclidean_sq(&self) -> bool {
        self.kind == MetricKind::Euclidean && self.ell == T::lit(2.0)
    }

    /// `D(x, y)` without a dimension check.
    pub(crate) fn raw_distance(&self, x: &[T], y: &[T]) -> T {
        debug_assert_eq!(x.len(), y.len());
        match self.kind {
            MetricKind::Euclidean => squared_euclidean(x, y).sqrt(),
            MetricKind::Manhattan => stable_sum(x.iter().zip(y).map(|(&a, &b)| (a - b).abs())),
        }
    }

    /// `D(x, y)^ell` without a dimension check. Squared euclidean is computed
    /// without the square root so that it stays exact on integer data.
    pub(crate) fn raw_cost(&self, x: &[T], y: &[T]) -> T {
        let two = T::lit(2.0);
        match self.kind {
            MetricKind::Euclidean => {
                let sq = squared_euclidean(x, y);
                if self.ell == two {
                    sq
                } else if self.ell == T::one() {
                    sq.sqrt()
                } else {
                    sq.powf(self.ell / two)
                }
            }
            MetricKind::Manhattan => {
                let d = self.raw_distance(x, y);
                if self.ell == T::one() {
                    d
                } else {
                    d.powf(self.ell)
                }
            }
        }
    }

    /// `D(x, y)^ell`.
    pub fn cost(&self, x: &[T], y: &[T]) -> Result<T> {
        check_dims(x, y)?;
        Ok(self.raw_cost(x, y))
    }
}

fn squared_euclidean<T: Scalar>(x: &[T], y: &[T]) -> T {
    stable_sum(x.iter().zip(y).map(|(&a, &b)| {
        let d = a - b;
        d * d
    }))
}

fn check_dims<T>(x: &[T], y: &[T]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(())
}

/// `D(x, y)` under the given metric (the exponent is not applied).
pub fn distance<T: Scalar>(x: &[T], y: &[T], metric: &MetricSpec<T>) -> Result<T> {
    check_dims(x, y)?;
    Ok(metric.raw_distance(x, y))
}

/// Where a center came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CenterOrigin {
    DataIndex(usize),
    Synthetic,
}

/// Ordered list of centers, each tagged with its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterSet<T> {
    coords: Vec<T>,
    dim: usize,
    origin: Vec<CenterOrigin>,
}

impl<T: Scalar> CenterSet<T> {
    pub fn empty(dim: usize) -> Self {
        Self {
            coords: Vec::new(),
            dim,
            origin: Vec::new(),
        }
    }

    /// Synthetic centers from explicit coordinates.
    pub fn from_points(points: Vec<Vec<T>>) -> Result<Self> {
        let dim = points.first().ok_or(Error::EmptyCenters)?.len();
        let mut set = Self::empty(dim);
        for p in points {
            set.push(&p, CenterOrigin::Synthetic)?;
        }
        Ok(set)
    }

    /// Centers placed at the given data points.
    pub fn from_indices(ds: &Dataset<T>, indices: &[usize]) -> Result<Self> {
        let mut set = Self::empty(ds.dim());
        for &i in indices {
            set.push_data_point(ds, i)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, point: &[T], origin: CenterOrigin) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: point.len(),
            });
        }
        if let Some(i) = point.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { point: i });
        }
        self.coords.extend_from_slice(point);
        self.origin.push(origin);
        Ok(())
    }

    pub fn push_data_point(&mut self, ds: &Dataset<T>, i: usize) -> Result<()> {
        if i >= ds.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: ds.len(),
            });
        }
        self.push(ds.point(i), CenterOrigin::DataIndex(i))
    }

    pub fn len(&self) -> usize {
        self.origin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origin.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self, j: usize) -> &[T] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn centers(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.coords.chunks_exact(self.dim.max(1))
    }

    pub fn origins(&self) -> &[CenterOrigin] {
        &self.origin
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.centers().map(<[T]>::to_vec).collect()
    }

    pub(crate) fn set_center(&mut self, j: usize, point: &[T], origin: CenterOrigin) {
        self.coords[j * self.dim..(j + 1) * self.dim].copy_from_slice(point);
        self.origin[j] = origin;
    }
}

/// Nearest-center ownership and per-point cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment<T> {
    pub owner: Vec<usize>,
    pub cost: Vec<T>,
}

impl<T: Scalar> Assignment<T> {
    /// Total potential. Costs are summed in ascending order, which makes the
    /// value independent of point order.
    pub fn phi(&self) -> T {
        let mut sorted = self.cost.clone();
        sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("costs are finite"));
        stable_sum(sorted)
    }

    /// Contribution of the given points to the potential.
    pub fn subset_potential(&self, subset: &[usize]) -> Result<T> {
        let n = self.cost.len();
        if let Some(&bad) = subset.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        Ok(stable_sum(subset.iter().map(|&i| self.cost[i])))
    }
}

/// Index of the nearest center and its cost; ties go to the smallest index.
pub(crate) fn nearest<T: Scalar>(x: &[T], cs: &CenterSet<T>, metric: &MetricSpec<T>) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (j, c) in cs.centers().enumerate() {
        let d = metric.raw_cost(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn check_compatible<T: Scalar>(ds: &Dataset<T>, cs: &CenterSet<T>) -> Result<()> {
    if cs.is_empty() {
        return Err(Error::EmptyCenters);
    }
    if cs.dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            got: cs.dim(),
        });
    }
    Ok(())
}

/// Assigns every point to its nearest center.
pub fn assign<T: Scalar>(ds: &Dataset<T>, cs: &CenterSet<T>, metric: &MetricSpec<T>) -> Result<Assignment<T>> {
    check_compatible(ds, cs)?;
    let (owner, cost) = ds.points().map(|x| nearest(x, cs, metric)).unzip();
    Ok(Assignment { owner, cost })
}

/// Potential of `cs` on `ds` together with the assignment that realizes it.
pub fn potential<T: Scalar>(
    ds: &Dataset<T>,
    cs: &CenterSet<T>,
    metric: &MetricSpec<T>,
) -> Result<(T, Assignment<T>)> {
    let a = assign(ds, cs, metric)?;
    Ok((a.phi(), a))
}

/// Per-point costs against a center set, without ownership.
pub(crate) fn costs_against<T: Scalar>(ds: &Dataset<T>, cs: &CenterSet<T>, metric: &MetricSpec<T>) -> Vec<T> {
    ds.points().map(|x| nearest(x, cs, metric).1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2() -> MetricSpec<f64> {
        MetricSpec::kmeans()
    }

    #[test]
    fn distance_examples() {
        let e = MetricSpec::new(MetricKind::Euclidean, 1.0).unwrap();
        let l1 = MetricSpec::new(MetricKind::Manhattan, 1.0).unwrap();
        assert_eq!(distance(&[0.0, 0.0], &[3.0, 4.0], &e).unwrap(), 5.0);
        assert_eq!(distance(&[1.5, -2.0], &[1.5, -2.0], &e).unwrap(), 0.0);
        assert_eq!(distance(&[0.0, 0.0], &[3.0, 4.0], &l1).unwrap(), 7.0);
        assert!(matches!(
            distance(&[0.0], &[1.0, 2.0], &e),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cost_applies_exponent() {
        let l1_3 = MetricSpec::new(MetricKind::Manhattan, 3.0).unwrap();
        assert_eq!(l1_3.cost(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 8.0);
        let e15 = MetricSpec::new(MetricKind::Euclidean, 1.5_f64).unwrap();
        assert!((e15.cost(&[0.0], &[4.0]).unwrap() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn metric_rejects_small_ell() {
        assert!(MetricSpec::new(MetricKind::Euclidean, 0.5).is_err());
        assert!(MetricSpec::new(MetricKind::Euclidean, f64::NAN).is_err());
        assert!("chebyshev".parse::<MetricKind>().is_err());
        assert_eq!("Manhattan".parse::<MetricKind>().unwrap(), MetricKind::Manhattan);
    }

    #[test]
    fn dataset_validation() {
        assert!(matches!(Dataset::<f64>::new(vec![]), Err(Error::EmptyDataset)));
        assert!(matches!(Dataset::<f64>::new(vec![vec![]]), Err(Error::ZeroDimension)));
        assert!(matches!(
            Dataset::new(vec![vec![1.0], vec![1.0, 2.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            Dataset::new(vec![vec![1.0], vec![f64::INFINITY]]),
            Err(Error::NonFinite { point: 1 })
        ));
    }

    #[test]
    fn potential_examples() {
        let ds = Dataset::from_scalars(&[0.0, 2.0]).unwrap();
        let cs = CenterSet::from_points(vec![vec![0.0]]).unwrap();
        assert_eq!(potential(&ds, &cs, &m2()).unwrap().0, 4.0);

        let ds = Dataset::from_scalars(&[0.0, 1.0, 4.0]).unwrap();
        let cs = CenterSet::from_points(vec![vec![0.0], vec![4.0]]).unwrap();
        let (phi, a) = potential(&ds, &cs, &m2()).unwrap();
        assert_eq!(phi, 1.0);
        assert_eq!(a.owner, vec![0, 0, 1]);

        let all = CenterSet::from_indices(&ds, &[2, 0, 1]).unwrap();
        assert_eq!(potential(&ds, &all, &m2()).unwrap().0, 0.0);
    }

    #[test]
    fn ties_go_to_smallest_center_index() {
        let ds = Dataset::from_scalars(&[1.0]).unwrap();
        let cs = CenterSet::from_points(vec![vec![2.0], vec![0.0]]).unwrap();
        let (_, a) = potential(&ds, &cs, &m2()).unwrap();
        assert_eq!(a.owner, vec![0]);
    }

    #[test]
    fn empty_centers_rejected() {
        let ds = Dataset::from_scalars(&[1.0]).unwrap();
        assert!(matches!(
            potential(&ds, &CenterSet::empty(1), &m2()),
            Err(Error::EmptyCenters)
        ));
    }

    #[test]
    fn subset_potential_examples() {
        let ds = Dataset::from_scalars(&[0.0, 1.0, 4.0, 7.0]).unwrap();
        let cs = CenterSet::from_points(vec![vec![0.0], vec![4.0]]).unwrap();
        let (phi, a) = potential(&ds, &cs, &m2()).unwrap();
        assert_eq!(a.subset_potential(&[]).unwrap(), 0.0);
        assert_eq!(a.subset_potential(&[3]).unwrap(), a.cost[3]);
        let s = a.subset_potential(&[0, 2]).unwrap();
        let sbar = a.subset_potential(&[1, 3]).unwrap();
        assert_eq!(s + sbar, phi);
        assert!(matches!(
            a.subset_potential(&[4]),
            Err(Error::IndexOutOfRange { index: 4, len: 4 })
        ));
    }
}
