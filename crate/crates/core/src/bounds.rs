//! Closed-form constants and approximation bounds for D^ell sampling with
//! `beta k` centers measured against the optimal `k`-clustering.
//!
//! * `r_u`: single-cluster inflation for a uniformly chosen center, 2 for
//!   squared euclidean and `2^ell` otherwise.
//! * `r_D = 2^ell r_u`: the same for a D^ell-weighted center.
//! * Bi-criteria bound `r_D (1 + min{phi (k-2) / ((beta-1) k + phi), H_{k-1}})`
//!   with `phi` the golden ratio, optionally sharpened by `-2C/n`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::coeff::CoeffParams;
use crate::error::{Error, Result};
use crate::scalar::{KahanSum, Scalar};

/// Above this index `harmonic` switches from direct summation to the
/// asymptotic expansion, whose truncation error is below `k^-6 / 252`.
pub const HARMONIC_SERIES_LIMIT: i64 = 10_000_000;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Harmonic number `H_k`, with `H_0 = 0` and `H_{-1} = -1`.
pub fn harmonic<T: Scalar>(k: i64) -> Result<T> {
    match k {
        i64::MIN..=-2 => Err(Error::InvalidParameter(format!("harmonic number undefined for k = {k}"))),
        -1 => Ok(-T::one()),
        _ if k > HARMONIC_SERIES_LIMIT => {
            let x = k as f64;
            let inv2 = 1.0 / (x * x);
            let h = x.ln() + EULER_GAMMA + 0.5 / x - inv2 / 12.0 + inv2 * inv2 / 120.0;
            Ok(T::lit(h))
        }
        _ => {
            // smallest terms first
            let mut acc = KahanSum::new();
            for i in (1..=k).rev() {
                acc.add(T::one() / T::lit(i as f64));
            }
            Ok(acc.value())
        }
    }
}

/// Exact `H_k` as a reduced fraction.
pub fn harmonic_exact(k: i64) -> Result<BigRational> {
    match k {
        i64::MIN..=-2 => Err(Error::InvalidParameter(format!("harmonic number undefined for k = {k}"))),
        -1 => Ok(-BigRational::one()),
        _ => Ok((1..=k).fold(BigRational::zero(), |acc, i| {
            acc + BigRational::new(BigInt::one(), BigInt::from(i))
        })),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingleClusterRatios<T> {
    pub r_u: T,
    pub r_d: T,
}

/// `(r_u, r_D)` for exponent `ell`; `euclidean_sq` means euclidean with `ell = 2`.
pub fn single_cluster_ratios<T: Scalar>(ell: T, euclidean_sq: bool) -> Result<SingleClusterRatios<T>> {
    if !(ell >= T::one()) || !ell.is_finite() {
        return Err(Error::InvalidParameter(format!("ell must be >= 1, got {ell}")));
    }
    let two = T::lit(2.0);
    if euclidean_sq && ell != two {
        return Err(Error::InvalidParameter(format!(
            "euclidean_sq requires ell = 2, got {ell}"
        )));
    }
    let scale = two.powf(ell);
    let r_u = if euclidean_sq { two } else { scale };
    Ok(SingleClusterRatios { r_u, r_d: scale * r_u })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs<T> {
    pub k: u64,
    pub beta: T,
    pub ell: T,
    pub euclidean_sq: bool,
    /// Point count, enabling the `-2C/n` refinement.
    pub n: Option<u64>,
}

impl<T: Scalar> BoundInputs<T> {
    pub fn new(k: u64, beta: T, ell: T, euclidean_sq: bool) -> Result<Self> {
        let b = Self {
            k,
            beta,
            ell,
            euclidean_sq,
            n: None,
        };
        b.validate()?;
        Ok(b)
    }

    /// Squared-euclidean inputs (`ell = 2`).
    pub fn kmeans(k: u64, beta: T) -> Result<Self> {
        Self::new(k, beta, T::lit(2.0), true)
    }

    pub fn with_n(mut self, n: u64) -> Self {
        self.n = Some(n);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidParameter(format!("k must be >= 2, got {}", self.k)));
        }
        if !(self.beta >= T::one()) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta must be >= 1, got {}", self.beta)));
        }
        if self.n == Some(0) {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        single_cluster_ratios(self.ell, self.euclidean_sq).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport<T> {
    pub inputs: BoundInputs<T>,
    pub r_u: T,
    pub r_d: T,
    /// `H_{k-1}`.
    pub h_term: T,
    /// `phi (k-2) / ((beta-1) k + phi)`.
    pub finite_term: T,
    /// `r_D (1 + min{finite_term, h_term})`.
    pub theorem1_asymptotic: T,
    /// `min{r_D (1 + finite_term) - 2C/n, r_D (1 + h_term)}` when `n` is
    /// known, otherwise equal to `theorem1_asymptotic`.
    pub theorem1: T,
    /// `r_D (1 + phi / (beta - 1))`; absent for `beta = 1`.
    pub corollary: Option<T>,
    pub c_constant: T,
}

impl<T: Scalar> BoundReport<T> {
    /// Ratio guaranteed with probability at least `1 - tail_mass`.
    pub fn markov_ratio_at(&self, tail_mass: T) -> Result<T> {
        markov_tail(self.theorem1, tail_mass)
    }
}

fn finite_term<T: Scalar>(k: u64, beta: T) -> T {
    let g = T::golden_ratio();
    let kf = T::lit(k as f64);
    g * (kf - T::lit(2.0)) / ((beta - T::one()) * kf + g)
}

pub fn theorem1_bound<T: Scalar>(b: &BoundInputs<T>) -> Result<BoundReport<T>> {
    b.validate()?;
    let SingleClusterRatios { r_u, r_d } = single_cluster_ratios(b.ell, b.euclidean_sq)?;
    let h_term = harmonic::<T>(b.k as i64 - 1)?;
    let finite = finite_term(b.k, b.beta);
    let first = r_d * (T::one() + finite);
    let second = r_d * (T::one() + h_term);
    let theorem1_asymptotic = first.min(second);
    let c = c_constant(b.k, b.beta, b.ell, b.euclidean_sq)?.simplified;
    let theorem1 = match b.n {
        Some(n) => (first - T::lit(2.0) * c / T::lit(n as f64)).min(second),
        None => theorem1_asymptotic,
    };
    let corollary = if b.beta > T::one() {
        Some(corollary_bound(b.beta, b.ell, b.euclidean_sq)?)
    } else {
        None
    };
    Ok(BoundReport {
        inputs: *b,
        r_u,
        r_d,
        h_term,
        finite_term: finite,
        theorem1_asymptotic,
        theorem1,
        corollary,
        c_constant: c,
    })
}

/// `k`-independent bound `r_D (1 + phi / (beta - 1))`, for `beta > 1`.
pub fn corollary_bound<T: Scalar>(beta: T, ell: T, euclidean_sq: bool) -> Result<T> {
    if !(beta > T::one()) {
        return Err(Error::InvalidParameter(format!("corollary needs beta > 1, got {beta}")));
    }
    let r = single_cluster_ratios(ell, euclidean_sq)?;
    Ok(r.r_d * (T::one() + T::golden_ratio() / (beta - T::one())))
}

/// `ceil(16 (k + sqrt k))`, the center count of the constant-probability
/// comparison result.
pub fn oversampled_centers(k: u64) -> u64 {
    (16.0 * (k as f64 + (k as f64).sqrt())).ceil() as u64
}

/// Markov inflation: with probability at least `1 - tail_mass` the ratio is
/// at most `mean_bound / tail_mass`.
pub fn markov_tail<T: Scalar>(mean_bound: T, tail_mass: T) -> Result<T> {
    if !(tail_mass > T::zero() && tail_mass <= T::one()) {
        return Err(Error::InvalidParameter(format!(
            "tail mass must lie in (0, 1], got {tail_mass}"
        )));
    }
    Ok(mean_bound / tail_mass)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalBeta<T> {
    pub k: u64,
    /// False when the finite term never exceeds `H_{k-1}` (k = 2, 3); all
    /// values are then 1.
    pub applicable: bool,
    /// Crossover found by bisection on the bound itself.
    pub solved: T,
    /// `1 + phi (k - 2 - H_{k-1}) / (k H_{k-1})`.
    pub printed_formula: T,
    /// The same expression with the golden-ratio factor replaced by 1.
    pub unit_coefficient: T,
}

/// Smallest `beta` for which the finite term is at most `H_{k-1}`.
pub fn critical_beta<T: Scalar>(k: u64) -> Result<CriticalBeta<T>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be >= 2, got {k}")));
    }
    let h = harmonic::<T>(k as i64 - 1)?;
    let kf = T::lit(k as f64);
    let excess = kf - T::lit(2.0) - h;
    if excess <= T::zero() {
        return Ok(CriticalBeta {
            k,
            applicable: false,
            solved: T::one(),
            printed_formula: T::one(),
            unit_coefficient: T::one(),
        });
    }
    let g = T::golden_ratio();
    let gap = |beta: T| finite_term(k, beta) - h;
    let mut lo = T::one();
    let mut hi = T::lit(2.0);
    while gap(hi) > T::zero() {
        hi = hi + hi;
    }
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap(mid) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CriticalBeta {
        k,
        applicable: true,
        solved: hi,
        printed_formula: T::one() + g * excess / (kf * h),
        unit_coefficient: T::one() + excess / (kf * h),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalSweep<T> {
    pub rows: Vec<CriticalBeta<T>>,
    pub argmax_solved: u64,
    pub max_solved: T,
    pub argmax_printed: u64,
    pub max_printed: T,
    pub argmax_unit: u64,
    pub max_unit: T,
}

/// `critical_beta` for `k = 2..=k_max` with the maximizer of each column.
pub fn critical_beta_sweep<T: Scalar>(k_max: u64) -> Result<CriticalSweep<T>> {
    if k_max < 2 {
        return Err(Error::InvalidParameter(format!("k_max must be >= 2, got {k_max}")));
    }
    let rows = (2..=k_max).map(critical_beta::<T>).collect::<Result<Vec<_>>>()?;
    let argmax = |f: fn(&CriticalBeta<T>) -> T| {
        rows.iter()
            .fold((rows[0].k, f(&rows[0])), |best, r| if f(r) > best.1 { (r.k, f(r)) } else { best })
    };
    let (argmax_solved, max_solved) = argmax(|r| r.solved);
    let (argmax_printed, max_printed) = argmax(|r| r.printed_formula);
    let (argmax_unit, max_unit) = argmax(|r| r.unit_coefficient);
    Ok(CriticalSweep {
        rows,
        argmax_solved,
        max_solved,
        argmax_printed,
        max_printed,
        argmax_unit,
        max_unit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CConstant<T> {
    /// `r_u [(2^ell - 1)(beta - 1) k + phi((2^ell - 1)(k - 1) - 1)] / ((beta - 1) k + phi)`.
    pub simplified: T,
    /// `r_D c_U(beta k - 1, k - 1) - r_u c_V(beta k - 1, k - 1)`.
    pub unsimplified: T,
}

/// The constant `C` multiplying the `-1/n` correction, evaluated both from
/// its definition and from its simplified form. Fails if the two disagree
/// beyond `1e-12` relative or if `C < 0`.
pub fn c_constant<T: Scalar>(k: u64, beta: T, ell: T, euclidean_sq: bool) -> Result<CConstant<T>> {
    if k < 2 || !(beta >= T::one()) {
        return Err(Error::InvalidParameter(format!(
            "C needs k >= 2 and beta >= 1, got k = {k}, beta = {beta}"
        )));
    }
    let SingleClusterRatios { r_u, r_d } = single_cluster_ratios(ell, euclidean_sq)?;
    let one = T::one();
    let g = T::golden_ratio();
    let kf = T::lit(k as f64);
    let m = T::lit(2.0).powf(ell) - one;
    let denom = (beta - one) * kf + g;
    let simplified = r_u * (m * (beta - one) * kf + g * (m * (kf - one) - one)) / denom;

    let p = CoeffParams::<T>::golden();
    let (t, u) = (beta * kf - one, kf - one);
    let first = r_d * p.cu(t, u);
    let second = r_u * p.cv(t, u);
    let unsimplified = first - second;

    let tol = T::lit(1e-12).max(T::lit(100.0) * T::epsilon());
    let scale = one.max(first.abs()).max(second.abs());
    if (simplified - unsimplified).abs() > tol * scale {
        return Err(Error::Verification(format!(
            "C forms disagree: simplified {simplified}, definition {unsimplified}"
        )));
    }
    if simplified < -tol * scale {
        return Err(Error::Verification(format!("C = {simplified} is negative")));
    }
    Ok(CConstant {
        simplified: simplified.max(T::zero()),
        unsimplified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phi() -> f64 {
        f64::golden_ratio()
    }

    #[test]
    fn harmonic_values() {
        assert_eq!(harmonic::<f64>(1).unwrap(), 1.0);
        assert_eq!(harmonic::<f64>(0).unwrap(), 0.0);
        assert_eq!(harmonic::<f64>(-1).unwrap(), -1.0);
        assert!((harmonic::<f64>(3).unwrap() - 11.0 / 6.0).abs() < 1e-15);
        assert!(harmonic::<f64>(-2).is_err());
        assert_eq!(harmonic_exact(3).unwrap(), BigRational::new(11.into(), 6.into()));
        assert_eq!(harmonic_exact(-1).unwrap(), -BigRational::one());
    }

    #[test]
    fn harmonic_expansion_joins_series() {
        let k = HARMONIC_SERIES_LIMIT;
        let series: f64 = harmonic(k).unwrap();
        let expansion = harmonic::<f64>(k + 1).unwrap() - 1.0 / (k + 1) as f64;
        assert!((series - expansion).abs() < 1e-13, "{series} vs {expansion}");
        let big: f64 = harmonic(1_000_000_000_000).unwrap();
        assert!((big - (1e12_f64.ln() + EULER_GAMMA)).abs() < 1e-12);
    }

    #[test]
    fn ratios() {
        let r = single_cluster_ratios(2.0, true).unwrap();
        assert_eq!((r.r_u, r.r_d), (2.0, 8.0));
        let r = single_cluster_ratios(1.0, false).unwrap();
        assert_eq!((r.r_u, r.r_d), (2.0, 4.0));
        let r = single_cluster_ratios(2.0, false).unwrap();
        assert_eq!((r.r_u, r.r_d), (4.0, 16.0));
        assert!(single_cluster_ratios(0.5, false).is_err());
        assert!(single_cluster_ratios(1.0, true).is_err());
    }

    #[test]
    fn theorem1_examples() {
        for beta in [1.0, 1.5, 3.0] {
            let r = theorem1_bound(&BoundInputs::kmeans(2, beta).unwrap()).unwrap();
            assert_eq!(r.theorem1, 8.0);
        }
        let r = theorem1_bound(&BoundInputs::<f64>::kmeans(10, 1.0).unwrap()).unwrap();
        assert!((r.finite_term - 8.0).abs() < 1e-12);
        assert!((r.theorem1 - 8.0 * (1.0 + harmonic::<f64>(9).unwrap())).abs() < 1e-12);
        assert!(r.corollary.is_none());
    }

    #[test]
    fn n_refinement_subtracts_two_c_over_n() {
        let b = BoundInputs::<f64>::kmeans(2, 1.0).unwrap().with_n(6);
        let r = theorem1_bound(&b).unwrap();
        assert_eq!(r.c_constant, 4.0);
        assert!((r.theorem1 - (8.0 - 8.0 / 6.0)).abs() < 1e-12);
        assert_eq!(r.theorem1_asymptotic, 8.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(BoundInputs::kmeans(1, 2.0).is_err());
        assert!(BoundInputs::kmeans(3, 0.5).is_err());
        assert!(corollary_bound(1.0, 2.0, true).is_err());
        assert!(markov_tail(1.0, 0.0).is_err());
        assert!(markov_tail(1.0, 1.5).is_err());
        assert!(critical_beta::<f64>(1).is_err());
    }

    #[test]
    fn corollary_examples() {
        assert!((corollary_bound(2.0, 2.0, true).unwrap() - 8.0 * (1.0 + phi())).abs() < 1e-12);
        assert!((corollary_bound(2.0_f64, 2.0, true).unwrap() - 20.944).abs() < 1e-3);
        assert!((corollary_bound(16.0, 2.0, true).unwrap() - 8.0 * (1.0 + phi() / 15.0)).abs() < 1e-12);
        assert!((corollary_bound(1e12_f64, 2.0, true).unwrap() - 8.0).abs() < 1e-9);
    }

    #[test]
    fn markov_examples() {
        let mean = 8.0 * (1.0 + phi() / 15.0);
        assert!((markov_tail(mean, 0.97).unwrap() - 9.137).abs() < 5e-3);
        assert_eq!(markov_tail(mean, 1.0).unwrap(), mean);
        assert!(markov_tail(mean, 0.97).unwrap() < 20.0 / 2.0);
    }

    #[test]
    fn critical_beta_small_k_not_applicable() {
        for k in [2, 3] {
            let c = critical_beta::<f64>(k).unwrap();
            assert!(!c.applicable);
            assert_eq!(c.solved, 1.0);
        }
        assert!(critical_beta::<f64>(4).unwrap().applicable);
    }

    #[test]
    fn critical_beta_solve_matches_crossover() {
        for k in [4, 10, 22, 100, 1000] {
            let c = critical_beta::<f64>(k).unwrap();
            let h = harmonic::<f64>(k as i64 - 1).unwrap();
            assert!((finite_term(k, c.solved) - h).abs() < 1e-9);
            assert!((c.solved - c.printed_formula).abs() < 1e-9);
        }
    }

    #[test]
    fn c_constant_examples() {
        let c = c_constant(2, 1.0_f64, 1.0, false).unwrap();
        assert!(c.simplified.abs() < 1e-15 && c.unsimplified.abs() < 1e-12);
        let c = c_constant(2, 1.0_f64, 2.0, true).unwrap();
        assert!((c.simplified - 4.0).abs() < 1e-12);
        assert!((c.unsimplified - 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_precision_bounds() {
        let r = theorem1_bound(&BoundInputs::<f32>::kmeans(5, 2.0).unwrap()).unwrap();
        let r64 = theorem1_bound(&BoundInputs::<f64>::kmeans(5, 2.0).unwrap()).unwrap();
        assert!((r.theorem1 as f64 - r64.theorem1).abs() < 1e-4);
    }
}
