//! Probability measures and the Kantorovich-Rubinstein (Wasserstein-1) distance.
//!
//! Exact routes only: the CDF formula for laws on the line, sorting for equal
//! size 1-D samples, and an assignment solver for small point clouds under the
//! l1 ground cost. There is no entropic fallback; callers above `n_max` must
//! subsample.

mod assignment;
mod duality;
mod transport;

pub use assignment::{min_cost_assignment, Assignment};
pub use duality::{duality_lower_bound, TestFunction};
pub use transport::{d1_finite_vectors, transport_plan, TransportPlan, WeightedPoint};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Masses must sum to one within this tolerance.
pub const MASS_TOL: f64 = 1e-12;

/// Default cap on the cloud size handed to the assignment solver.
pub const DEFAULT_N_MAX: usize = 256;

/// Finitely supported law on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDiscrete", into = "RawDiscrete")]
pub struct DiscreteMeasure {
    support: Vec<f64>,
    mass: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawDiscrete {
    support: Vec<f64>,
    mass: Vec<f64>,
}

impl TryFrom<RawDiscrete> for DiscreteMeasure {
    type Error = Error;
    fn try_from(raw: RawDiscrete) -> Result<Self> {
        DiscreteMeasure::new(raw.support, raw.mass)
    }
}

impl From<DiscreteMeasure> for RawDiscrete {
    fn from(m: DiscreteMeasure) -> Self {
        RawDiscrete {
            support: m.support,
            mass: m.mass,
        }
    }
}

impl DiscreteMeasure {
    /// Strict constructor: support strictly increasing, masses nonnegative and
    /// summing to one.
    pub fn new(support: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidMeasure("empty support".into()));
        }
        if support.len() != mass.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} atoms but {} masses",
                support.len(),
                mass.len()
            )));
        }
        if support.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite atom".into()));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidMeasure(
                "support must be strictly increasing".into(),
            ));
        }
        if mass.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidMeasure("masses must be nonnegative".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!(
                "masses sum to {total}, not 1"
            )));
        }
        Ok(Self { support, mass })
    }

    /// Builds a measure from unordered `(atom, weight)` pairs, merging repeated
    /// atoms and normalising the weights.
    pub fn from_weighted<I: IntoIterator<Item = (f64, f64)>>(atoms: I) -> Result<Self> {
        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().collect();
        if pairs.iter().any(|(x, w)| !x.is_finite() || !(*w >= 0.0)) {
            return Err(Error::InvalidMeasure("bad atom or weight".into()));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("total weight must be positive".into()));
        }
        let mut support: Vec<f64> = Vec::new();
        let mut mass: Vec<f64> = Vec::new();
        for (x, w) in pairs {
            if w == 0.0 {
                continue;
            }
            match support.last() {
                Some(&last) if last == x => *mass.last_mut().unwrap() += w,
                _ => {
                    support.push(x);
                    mass.push(w);
                }
            }
        }
        for m in &mut mass {
            *m /= total;
        }
        Self::new(support, mass)
    }

    /// Empirical law of a sample.
    pub fn empirical(sample: &[f64]) -> Result<Self> {
        Self::from_weighted(sample.iter().map(|&x| (x, 1.0)))
    }

    pub fn dirac(x: f64) -> Self {
        Self {
            support: vec![x],
            mass: vec![1.0],
        }
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.mass.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.atoms().map(|(x, p)| x * p).sum()
    }

    pub fn mean_abs(&self) -> f64 {
        self.atoms().map(|(x, p)| x.abs() * p).sum()
    }

    /// F(x) = mu((-inf, x]).
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.support.partition_point(|&s| s <= x);
        self.mass[..k].iter().sum::<f64>().min(1.0)
    }

    /// Pseudo-inverse inf{x : F(x) >= u} for u in (0, 1].
    pub fn quantile(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for (x, p) in self.atoms() {
            acc += p;
            if acc >= u {
                return x;
            }
        }
        // rounding left the cumulative sum a hair below u
        *self.support.last().unwrap()
    }

    pub fn is_integer_supported(&self) -> bool {
        self.support.iter().all(|x| x.fract() == 0.0 && *x >= 0.0)
    }
}

/// Point clouds in R^d, stored row-major. The empirical measure puts mass 1/n
/// on every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEmpirical", into = "RawEmpirical")]
pub struct EmpiricalMeasure {
    dim: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawEmpirical {
    points: Vec<Vec<f64>>,
}

impl TryFrom<RawEmpirical> for EmpiricalMeasure {
    type Error = Error;
    fn try_from(raw: RawEmpirical) -> Result<Self> {
        EmpiricalMeasure::from_rows(raw.points)
    }
}

impl From<EmpiricalMeasure> for RawEmpirical {
    fn from(m: EmpiricalMeasure) -> Self {
        RawEmpirical {
            points: m.rows().map(<[f64]>::to_vec).collect(),
        }
    }
}

impl EmpiricalMeasure {
    pub fn from_rows<R: AsRef<[f64]>>(rows: impl IntoIterator<Item = R>) -> Result<Self> {
        let mut dim = None;
        let mut data = Vec::new();
        for row in rows {
            let row = row.as_ref();
            match dim {
                None => dim = Some(row.len()),
                Some(d) if d != row.len() => return Err(Error::DimensionMismatch(d, row.len())),
                _ => {}
            }
            data.extend_from_slice(row);
        }
        let dim = dim.ok_or_else(|| Error::InvalidMeasure("no points".into()))?;
        if dim == 0 {
            return Err(Error::InvalidMeasure("zero-dimensional points".into()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite coordinate".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::from_rows(xs.iter().map(std::slice::from_ref))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Coordinates of a one-dimensional cloud.
    pub fn scalars(&self) -> Result<&[f64]> {
        if self.dim != 1 {
            return Err(Error::DimensionMismatch(1, self.dim));
        }
        Ok(&self.data)
    }
}

/// A transport plan between two uniform empirical measures of size n.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingPlan {
    pub pairs: Vec<(usize, usize, f64)>,
}

impl CouplingPlan {
    /// Checks that both marginals are uniform on n points.
    pub fn has_uniform_marginals(&self, n: usize, tol: f64) -> bool {
        let mut row = vec![0.0; n];
        let mut col = vec![0.0; n];
        for &(i, j, w) in &self.pairs {
            if i >= n || j >= n || w < 0.0 {
                return false;
            }
            row[i] += w;
            col[j] += w;
        }
        let target = 1.0 / n as f64;
        row.iter().chain(&col).all(|m| (m - target).abs() <= tol)
    }
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// d1 between two finitely supported laws on the line: the integral of |F - G|.
pub fn d1_discrete(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let (a, b) = (&mu.support, &nu.support);
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut prev: Option<f64> = None;
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&xa), Some(&xb)) => xa.min(xb),
            (Some(&xa), None) => xa,
            (None, Some(&xb)) => xb,
            (None, None) => unreachable!(),
        };
        if let Some(p) = prev {
            total += (fa - fb).abs() * (x - p);
        }
        while i < a.len() && a[i] == x {
            fa += mu.mass[i];
            i += 1;
        }
        while j < b.len() && b[j] == x {
            fb += nu.mass[j];
            j += 1;
        }
        prev = Some(x);
    }
    total
}

fn sorted_by_value_then_index(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]).then(i.cmp(&j)));
    idx.into_iter().map(|i| xs[i]).collect()
}

/// d1 between two equal-size samples on the line: mean gap of the order
/// statistics (the comonotone matching is optimal).
pub fn d1_empirical_1d(x: &EmpiricalMeasure, y: &EmpiricalMeasure) -> Result<f64> {
    d1_sorted_samples(x.scalars()?, y.scalars()?)
}

/// Slice form of [`d1_empirical_1d`].
pub fn d1_sorted_samples(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::SampleCountMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(Error::Empty("sample".into()));
    }
    let xs = sorted_by_value_then_index(x);
    let ys = sorted_by_value_then_index(y);
    let total: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / x.len() as f64)
}

/// Optimal plan and d1 for two equal-size clouds under the l1 ground cost.
pub fn optimal_plan(
    x: &EmpiricalMeasure,
    y: &EmpiricalMeasure,
    n_max: usize,
) -> Result<(CouplingPlan, f64)> {
    if x.len() != y.len() {
        return Err(Error::SampleCountMismatch(x.len(), y.len()));
    }
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch(x.dim(), y.dim()));
    }
    let n = x.len();
    if n > n_max {
        return Err(Error::ExactRegimeExceeded { n, n_max });
    }
    let cost: Vec<Vec<f64>> = x
        .rows()
        .map(|a| y.rows().map(|b| l1_distance(a, b)).collect())
        .collect();
    let assignment = min_cost_assignment(&cost);
    let w = 1.0 / n as f64;
    let pairs = assignment
        .row_to_col
        .iter()
        .enumerate()
        .map(|(i, &j)| (i, j, w))
        .collect();
    Ok((CouplingPlan { pairs }, assignment.cost / n as f64))
}

/// d1 between two equal-size clouds in R^d with the l1 ground cost, by exact
/// assignment. Fails loudly above `n_max`.
pub fn d1_empirical_l1(x: &EmpiricalMeasure, y: &EmpiricalMeasure, n_max: usize) -> Result<f64> {
    optimal_plan(x, y, n_max).map(|(_, d)| d)
}

/// The 1-D optimal coupling evaluated at one uniform: (F^-1(u), G^-1(u)).
pub fn quantile_coupling(mu: &DiscreteMeasure, nu: &DiscreteMeasure, u: f64) -> Result<(f64, f64)> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("u = {u} is not in (0, 1)")));
    }
    Ok((mu.quantile(u), nu.quantile(u)))
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F_x - F_y|.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty("sample".into()));
    }
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        best = best.max((i as f64 / nx - j as f64 / ny).abs());
    }
    Ok(best)
}

/// Smallest truncation dimension d whose remainder bound is within `tol`.
///
/// `remainder(d)` must bound sum_{i>d} E|B_i| and be nonincreasing in d.
/// Returns the dimension together with the bound reached at it, which is the
/// additive slack reported alongside vector d1 values.
pub fn truncation_dim(remainder: impl Fn(usize) -> f64, tol: f64, max_dim: usize) -> (usize, f64) {
    let (mut lo, mut hi) = (0usize, max_dim);
    if remainder(hi) > tol {
        return (hi, remainder(hi));
    }
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if remainder(mid) <= tol {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    (lo, remainder(lo))
}
