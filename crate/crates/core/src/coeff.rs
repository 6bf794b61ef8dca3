//! Coefficients `c_V(t, u)` and `c_U(t, u)` that bound the expected potential
//! after `t` more D^ell picks with `u` uncovered optimal clusters:
//!
//! ```text
//! E[phi' | phi] <= c_V(t, u) phi(covered) + c_U(t, u) rho(uncovered)
//! ```
//!
//! Two sources are provided: the two-parameter closed form
//! `c_V = 1 + (a+1) u / (t - u + b)`, `c_U(t, u) = c_V(t-1, u-1)` (zero for
//! `u = 0`), and the grid obtained by running the inductive recursion with
//! equality from the boundary values `c_V(t,0) = 1`, `c_U(t,0) = 0`,
//! `c_V(u,u) = 1 + H_u`, `c_U(u,u) = 1 + H_{u-1}`.

use std::io::Write;

use serde::Serialize;

use crate::bounds::harmonic;
use crate::error::{Error, Result};
use crate::scalar::{approx_eq, Scalar};

/// Inequality slack used when checking a condition that may hold with
/// equality: `lhs >= rhs - INEQ_GUARD * max(1, |rhs|)`.
pub const INEQ_GUARD: f64 = 1e-12;

/// Default tolerance for algebraic identity checks.
pub const IDENTITY_TOL: f64 = 1e-9;

/// Parameters `(a, b)` of the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoeffParams<T> {
    pub a: T,
    pub b: T,
}

impl<T: Scalar> CoeffParams<T> {
    /// Parameters satisfying `a > -1`, `b > 0`, `a + 1 >= b` and `a b >= 1`.
    pub fn new(a: T, b: T) -> Result<Self> {
        let p = Self::unconstrained(a, b)?;
        if !p.satisfies_constraints() {
            return Err(Error::InvalidParameter(format!(
                "(a, b) = ({a}, {b}) violates a + 1 >= b or a b >= 1"
            )));
        }
        Ok(p)
    }

    /// Parameters only required to keep the closed form well defined
    /// (`a > -1`, `b > 0`); used to explore constraint violations.
    pub fn unconstrained(a: T, b: T) -> Result<Self> {
        if !(a > -T::one()) || !(b > T::zero()) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "closed form needs a > -1 and b > 0, got a = {a}, b = {b}"
            )));
        }
        Ok(Self { a, b })
    }

    /// `a = phi - 1`, `b = phi`: the minimizing choice, with `a (a + 1) = 1`.
    pub fn golden() -> Self {
        let g = T::golden_ratio();
        Self { a: g - T::one(), b: g }
    }

    pub fn satisfies_constraints(&self) -> bool {
        let guard = T::lit(INEQ_GUARD);
        self.a + T::one() >= self.b - guard && self.a * self.b >= T::one() - guard
    }

    /// Closed-form `c_V(t, u)` for real `t >= u >= 0`.
    pub fn cv(&self, t: T, u: T) -> T {
        T::one() + (self.a + T::one()) * u / (t - u + self.b)
    }

    /// Closed-form `c_U(t, u)`: `c_V(t-1, u-1)` for `u > 0`, else zero.
    pub fn cu(&self, t: T, u: T) -> T {
        if u > T::zero() {
            self.cv(t - T::one(), u - T::one())
        } else {
            T::zero()
        }
    }
}

fn check_closed_domain<T: Scalar>(t: T, u: T, p: &CoeffParams<T>) -> Result<()> {
    if !(u >= T::zero()) || !(t >= u) || !(t - u + p.b > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "closed form needs t >= u >= 0 and t - u + b > 0, got t = {t}, u = {u}"
        )));
    }
    Ok(())
}

pub fn closed_cv<T: Scalar>(t: T, u: T, p: &CoeffParams<T>) -> Result<T> {
    check_closed_domain(t, u, p)?;
    Ok(p.cv(t, u))
}

pub fn closed_cu<T: Scalar>(t: T, u: T, p: &CoeffParams<T>) -> Result<T> {
    check_closed_domain(t, u, p)?;
    Ok(p.cu(t, u))
}

/// Random access to `c_V`, `c_U` over integer `(t, u)` with `t >= u`.
pub trait CoeffTable<T> {
    fn cv(&self, t: usize, u: usize) -> T;
    fn cu(&self, t: usize, u: usize) -> T;
    /// Whether `(t, u)` can be evaluated.
    fn contains(&self, t: usize, u: usize) -> bool;
}

/// The closed form viewed as an unbounded table.
#[derive(Debug, Clone, Copy)]
pub struct ClosedForm<T>(pub CoeffParams<T>);

impl<T: Scalar> CoeffTable<T> for ClosedForm<T> {
    fn cv(&self, t: usize, u: usize) -> T {
        self.0.cv(T::from_usize_lossy(t), T::from_usize_lossy(u))
    }

    fn cu(&self, t: usize, u: usize) -> T {
        self.0.cu(T::from_usize_lossy(t), T::from_usize_lossy(u))
    }

    fn contains(&self, t: usize, u: usize) -> bool {
        u <= t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSource {
    Recursion,
    ClosedForm,
}

/// Triangular table over `0 <= u <= t <= t_max`; row `t` holds `t + 1` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffGrid<T> {
    t_max: usize,
    cv: Vec<Vec<T>>,
    cu: Vec<Vec<T>>,
    source: GridSource,
}

impl<T: Scalar> CoeffGrid<T> {
    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn source(&self) -> GridSource {
        self.source
    }

    /// `(t, u, c_V, c_U)` in row-major order (ascending `t`, then `u`).
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, T, T)> + '_ {
        (0..=self.t_max).flat_map(move |t| (0..=t).map(move |u| (t, u, self.cv[t][u], self.cu[t][u])))
    }

    /// CSV with header `t,u,c_v,c_u`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["t", "u", "c_v", "c_u"])?;
        for (t, u, cv, cu) in self.cells() {
            wtr.write_record([t.to_string(), u.to_string(), cv.to_string(), cu.to_string()])?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn max_cv(&self) -> T {
        self.cells().map(|c| c.2).fold(T::neg_infinity(), T::max)
    }
}

impl<T: Scalar> CoeffTable<T> for CoeffGrid<T> {
    fn cv(&self, t: usize, u: usize) -> T {
        self.cv[t][u]
    }

    fn cu(&self, t: usize, u: usize) -> T {
        self.cu[t][u]
    }

    fn contains(&self, t: usize, u: usize) -> bool {
        u <= t && t <= self.t_max
    }
}

/// One step of the `c_V` recursion:
/// `(c + sqrt(c^2 + 4 max(c_next - c, 0))) / 2` with `c = c_V(t, u)` and
/// `c_next = c_V(t, u + 1)`.
pub fn cv_recursion_step<T: Scalar>(cv_tu: T, cv_tu1: T) -> T {
    let half = T::lit(0.5);
    let four = T::lit(4.0);
    half * (cv_tu + (cv_tu * cv_tu + four * (cv_tu1 - cv_tu).max(T::zero())).sqrt())
}

/// Fills the grid by treating the sufficient-condition recursion as an
/// equality. Outer loop over `u` (so that `u + 1` runs from 1), inner loop
/// over `t` from `u + 1`; each step sets `(t + 1, u + 1)`.
pub fn recursion_grid<T: Scalar>(t_max: usize) -> Result<CoeffGrid<T>> {
    if t_max < 1 {
        return Err(Error::InvalidParameter("t_max must be at least 1".into()));
    }
    let mut cv: Vec<Vec<T>> = (0..=t_max).map(|t| vec![T::nan(); t + 1]).collect();
    let mut cu = cv.clone();
    for t in 0..=t_max {
        cv[t][0] = T::one();
        cu[t][0] = T::zero();
    }
    for u in 1..=t_max {
        cv[u][u] = T::one() + harmonic::<T>(u as i64)?;
        cu[u][u] = T::one() + harmonic::<T>(u as i64 - 1)?;
    }
    for u in 0..t_max {
        for t in (u + 1)..t_max {
            cv[t + 1][u + 1] = cv_recursion_step(cv[t][u], cv[t][u + 1]);
            cu[t + 1][u + 1] = cv[t][u];
        }
    }
    Ok(CoeffGrid {
        t_max,
        cv,
        cu,
        source: GridSource::Recursion,
    })
}

/// Tabulates the closed form over the triangle.
pub fn closed_grid<T: Scalar>(t_max: usize, p: &CoeffParams<T>) -> Result<CoeffGrid<T>> {
    if t_max < 1 {
        return Err(Error::InvalidParameter("t_max must be at least 1".into()));
    }
    let f = ClosedForm(*p);
    let cv = (0..=t_max).map(|t| (0..=t).map(|u| f.cv(t, u)).collect()).collect();
    let cu = (0..=t_max).map(|t| (0..=t).map(|u| f.cu(t, u)).collect()).collect();
    Ok(CoeffGrid {
        t_max,
        cv,
        cu,
        source: GridSource::ClosedForm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `c_V(t, u+1) >= 1`.
    CvFloor,
    /// `(c_V(t,u+1) - c_U(t,u+1)) c_V(t,u)^2 >= (c_U(t,u+1) - c_V(t,u))^2`.
    Linearization,
    /// `c_V(t+1,u+1) >= (c + sqrt(c^2 + 4 max(c_V(t,u+1) - c, 0))) / 2`, `c = c_V(t,u)`.
    CvRecursion,
    /// `c_U(t+1,u+1) >= c_V(t,u)`.
    CuRecursion,
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::CvFloor => "cv_floor",
            Self::Linearization => "linearization",
            Self::CvRecursion => "cv_recursion",
            Self::CuRecursion => "cu_recursion",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation<T> {
    pub t: usize,
    pub u: usize,
    pub condition: Condition,
    pub lhs: T,
    pub rhs: T,
}

fn at_least<T: Scalar>(lhs: T, rhs: T) -> bool {
    lhs >= rhs - T::lit(INEQ_GUARD) * T::one().max(rhs.abs())
}

/// Checks the four sufficient conditions at every `(t, u)` with
/// `t_max >= t > u >= 0`. The recursion conditions involve `(t + 1, u + 1)`
/// and are skipped where the table does not contain that cell.
pub fn verify_sufficient_conditions<T: Scalar>(table: &impl CoeffTable<T>, t_max: usize) -> Result<Vec<Violation<T>>> {
    if t_max < 2 {
        return Err(Error::InvalidParameter("t_max must be at least 2".into()));
    }
    let mut violations = Vec::new();
    let mut check = |t, u, condition, lhs: T, rhs: T| {
        if !at_least(lhs, rhs) {
            violations.push(Violation {
                t,
                u,
                condition,
                lhs,
                rhs,
            });
        }
    };
    for t in 1..=t_max {
        if !table.contains(t, t) {
            break;
        }
        for u in 0..t {
            let cv_tu = table.cv(t, u);
            let cv_tu1 = table.cv(t, u + 1);
            let cu_tu1 = table.cu(t, u + 1);
            check(t, u, Condition::CvFloor, cv_tu1, T::one());
            let gap = cu_tu1 - cv_tu;
            check(t, u, Condition::Linearization, (cv_tu1 - cu_tu1) * cv_tu * cv_tu, gap * gap);
            if table.contains(t + 1, u + 1) {
                check(
                    t,
                    u,
                    Condition::CvRecursion,
                    table.cv(t + 1, u + 1),
                    cv_recursion_step(cv_tu, cv_tu1),
                );
                check(t, u, Condition::CuRecursion, table.cu(t + 1, u + 1), cv_tu);
            }
        }
    }
    Ok(violations)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityFailure<T> {
    pub t: usize,
    pub u: usize,
    pub name: &'static str,
    pub lhs: T,
    pub rhs: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppendixReport<T> {
    pub params: CoeffParams<T>,
    pub t_max: usize,
    pub checks: usize,
    pub failures: Vec<IdentityFailure<T>>,
    /// Minimum over the grid of `(a+1)(t-u-1+b) - 1`.
    pub min_linearization_sign: T,
    /// Minimum over the grid of `a(t-u-1+b) - 1`.
    pub min_recursion_sign: T,
    /// `a b - 1`, the recursion sign term at `t = u + 1`.
    pub boundary_margin: T,
}

impl<T> AppendixReport<T> {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Evaluates, at every `t_max >= t > u >= 0`, each intermediate identity used
/// to show that the closed form meets the linearization condition and the
/// `c_V` recursion. Left sides come from the closed-form coefficients, right
/// sides from the simplified algebraic expressions in `a`, `b`, `t`, `u`.
pub fn verify_appendix_identities<T: Scalar>(p: &CoeffParams<T>, t_max: usize, tol: T) -> Result<AppendixReport<T>> {
    if t_max < 1 {
        return Err(Error::InvalidParameter("t_max must be at least 1".into()));
    }
    let f = ClosedForm(*p);
    let (a, b) = (p.a, p.b);
    let one = T::one();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let a1 = a + one;

    let mut checks = 0;
    let mut failures = Vec::new();
    let mut min_lin = T::infinity();
    let mut min_rec = T::infinity();

    for t in 1..=t_max {
        for u in 0..t {
            let (tf, uf) = (T::from_usize_lossy(t), T::from_usize_lossy(u));
            let d0 = tf - uf + b; // t - u + b
            let d1 = tf - uf - one + b; // t - u - 1 + b

            let cv_tu = f.cv(t, u);
            let cv_tu1 = f.cv(t, u + 1);
            let cu_tu1 = f.cu(t, u + 1);
            let cv_next = f.cv(t + 1, u + 1);

            let mut eq = |name: &'static str, lhs: T, rhs: T| {
                checks += 1;
                if !approx_eq(lhs, rhs, tol) {
                    failures.push(IdentityFailure { t, u, name, lhs, rhs });
                }
            };

            // linearization condition
            let diff_vu = cv_tu1 - cu_tu1;
            eq("cv_minus_cu", diff_vu, a1 / d1);
            let diff_uv = cu_tu1 - cv_tu;
            eq("cu_minus_cv", diff_uv, a1 * uf / (d0 * d1));
            let lin_lhs = diff_vu * cv_tu * cv_tu - diff_uv * diff_uv;
            let lin_rhs = a1 / d1 * (one + two * a1 * uf / d0)
                + a1 * a1 * uf * uf * (a1 * d1 - one) / (d0 * d0 * d1 * d1);
            eq("linearization_expansion", lin_lhs, lin_rhs);

            // c_V recursion
            let lhs_lin = two * cv_next - cv_tu;
            eq("recursion_lhs", lhs_lin, one + a1 * (uf + two) / d0);
            let sq_lhs = one + two * a1 * (uf + two) / d0 + a1 * a1 * (uf + two) * (uf + two) / (d0 * d0);
            eq("recursion_lhs_squared", lhs_lin * lhs_lin, sq_lhs);
            let cv_step = cv_tu1 - cv_tu;
            eq("cv_step", cv_step, a1 * (tf + b) / (d0 * d1));
            eq("cv_step_factored", cv_step, a1 / d0 * (one + (uf + one) / d1));
            eq("cv_squared", cv_tu * cv_tu, one + two * a1 * uf / d0 + a1 * a1 * uf * uf / (d0 * d0));
            let sq_rhs = one + two * a1 * (uf + two) / d0 + a1 * a1 * uf * uf / (d0 * d0) + four * a1 * (uf + one) / (d0 * d1);
            eq("recursion_rhs", cv_tu * cv_tu + four * cv_step, sq_rhs);
            eq(
                "recursion_gap",
                sq_lhs - sq_rhs,
                four * a1 * (uf + one) * (a * d1 - one) / (d0 * d0 * d1),
            );

            // sign conditions
            let lin_sign = a1 * d1 - one;
            let rec_sign = a * d1 - one;
            min_lin = min_lin.min(lin_sign);
            min_rec = min_rec.min(rec_sign);
            let mut nonneg = |name: &'static str, v: T| {
                checks += 1;
                if v < -tol {
                    failures.push(IdentityFailure {
                        t,
                        u,
                        name,
                        lhs: v,
                        rhs: T::zero(),
                    });
                }
            };
            nonneg("linearization_sign", lin_sign);
            nonneg("recursion_sign", rec_sign);
            nonneg("linearization_value", lin_lhs);
            nonneg("recursion_value", sq_lhs - sq_rhs);
        }
    }

    Ok(AppendixReport {
        params: *p,
        t_max,
        checks,
        failures,
        min_linearization_sign: min_lin,
        min_recursion_sign: min_rec,
        boundary_margin: a * b - one,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary<T> {
    pub count: usize,
    pub min: T,
    pub max: T,
    pub mean: T,
}

impl<T: Scalar> Summary<T> {
    fn of(values: &[T]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                count,
                min: T::nan(),
                max: T::nan(),
                mean: T::nan(),
            };
        }
        Self {
            count,
            min: values.iter().copied().fold(T::infinity(), T::min),
            max: values.iter().copied().fold(T::neg_infinity(), T::max),
            mean: crate::scalar::stable_sum(values.iter().copied()) / T::from_usize_lossy(count),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellDeviation<T> {
    pub t: usize,
    pub u: usize,
    pub value: T,
    /// `t / (t - u)`; NaN on the diagonal.
    pub ratio_reference: T,
    /// Golden-parameter closed form.
    pub closed: T,
    /// `|value - t/(t-u)| / (t/(t-u))`, NaN when `u = 0` or `t = u`.
    pub dev_ratio: T,
    /// `|value - closed| / closed`.
    pub dev_closed: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport<T> {
    pub cells: Vec<CellDeviation<T>>,
    /// Deviation from `t/(t-u)` over all cells with `0 < u < t`.
    pub vs_ratio: Summary<T>,
    /// The same restricted to `t >= 2u >= 2`.
    pub vs_ratio_wide: Summary<T>,
    pub vs_closed: Summary<T>,
    /// Cells where the closed form is below the grid value (beyond rounding).
    pub closed_below_grid: usize,
}

impl<T: Scalar> DeviationReport<T> {
    pub fn cell(&self, t: usize, u: usize) -> Option<&CellDeviation<T>> {
        self.cells.iter().find(|c| c.t == t && c.u == u)
    }

    /// Cells on the ray `t = c u`, ordered by increasing `t`.
    pub fn ray(&self, c: usize) -> Vec<CellDeviation<T>> {
        self.cells.iter().filter(|x| x.u > 0 && x.t == c * x.u).copied().collect()
    }

    /// Trend of `dev_ratio` along the ray `t = c u`; `None` with fewer than
    /// two cells.
    pub fn ray_trend(&self, c: usize) -> Option<RayTrend<T>> {
        let devs: Vec<T> = self.ray(c).iter().map(|x| x.dev_ratio).collect();
        if devs.len() < 2 {
            return None;
        }
        let half = devs.len() / 2;
        let max = |xs: &[T]| xs.iter().copied().fold(T::neg_infinity(), T::max);
        Some(RayTrend {
            c,
            cells: devs.len(),
            first: devs[0],
            last: devs[devs.len() - 1],
            inner_max: max(&devs[..half]),
            outer_max: max(&devs[half..]),
            strictly_monotone: devs.windows(2).all(|w| w[1] < w[0]),
        })
    }
}

/// Deviation from `t/(t-u)` along one ray. The inner half holds the cells
/// nearest the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RayTrend<T> {
    pub c: usize,
    pub cells: usize,
    pub first: T,
    pub last: T,
    pub inner_max: T,
    pub outer_max: T,
    pub strictly_monotone: bool,
}

impl<T: Scalar> RayTrend<T> {
    /// The deviation shrinks from the start of the ray to its end and the
    /// outer half stays below the inner half.
    pub fn decreasing(&self) -> bool {
        self.last < self.first && self.outer_max < self.inner_max
    }
}

/// Relative deviation of each grid cell from `t/(t-u)` and from the golden
/// closed form.
pub fn compare_grid_to_reference<T: Scalar>(grid: &CoeffGrid<T>) -> DeviationReport<T> {
    let golden = ClosedForm(CoeffParams::<T>::golden());
    let mut cells = Vec::new();
    let mut ratio_devs = Vec::new();
    let mut wide_devs = Vec::new();
    let mut closed_devs = Vec::new();
    let mut closed_below_grid = 0;
    for (t, u, value, _) in grid.cells() {
        let closed = golden.cv(t, u);
        let dev_closed = (value - closed).abs() / closed;
        closed_devs.push(dev_closed);
        if !at_least(closed, value) {
            closed_below_grid += 1;
        }
        let (ratio_reference, dev_ratio) = if u > 0 && t > u {
            let r = T::from_usize_lossy(t) / T::from_usize_lossy(t - u);
            let d = (value - r).abs() / r;
            ratio_devs.push(d);
            if t >= 2 * u {
                wide_devs.push(d);
            }
            (r, d)
        } else if u == 0 {
            (T::one(), T::nan())
        } else {
            (T::nan(), T::nan())
        };
        cells.push(CellDeviation {
            t,
            u,
            value,
            ratio_reference,
            closed,
            dev_ratio,
            dev_closed,
        });
    }
    DeviationReport {
        cells,
        vs_ratio: Summary::of(&ratio_devs),
        vs_ratio_wide: Summary::of(&wide_devs),
        vs_closed: Summary::of(&closed_devs),
        closed_below_grid,
    }
}
