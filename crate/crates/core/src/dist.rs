//! Scalar distribution primitives, all sampled by inversion of a uniform.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

/// Largest Poisson mean accepted; keeps e^{-lambda} well inside f64 range.
const POISSON_MAX_LAMBDA: f64 = 500.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dist {
    Point { value: f64 },
    Finite { measure: DiscreteMeasure },
    Uniform { lo: f64, hi: f64 },
    /// P(X = start + k) = p (1 - p)^k, k >= 0.
    Geometric { p: f64, start: u64 },
    Poisson { lambda: f64 },
    /// P(X > x) = (scale / x)^alpha for x >= scale.
    Pareto { alpha: f64, scale: f64 },
}

impl Dist {
    pub fn point(value: f64) -> Self {
        Self::Point { value }
    }

    pub fn finite(support: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        Ok(Self::Finite {
            measure: DiscreteMeasure::new(support, mass)?,
        })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let d = Self::Uniform { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn geometric(p: f64, start: u64) -> Result<Self> {
        let d = Self::Geometric { p, start };
        d.validate()?;
        Ok(d)
    }

    pub fn poisson(lambda: f64) -> Result<Self> {
        let d = Self::Poisson { lambda };
        d.validate()?;
        Ok(d)
    }

    pub fn binomial(n: u64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidDistribution(format!("binomial p = {p}")));
        }
        let mut mass = Vec::with_capacity(n as usize + 1);
        for k in 0..=n {
            mass.push(binomial_pmf(n, k, p));
        }
        let total: f64 = mass.iter().sum();
        for m in &mut mass {
            *m /= total;
        }
        let support = (0..=n).map(|k| k as f64).collect();
        Self::finite_trimmed(support, mass)
    }

    /// Poisson(lambda) conditioned on X <= max.
    pub fn poisson_truncated(lambda: f64, max: u64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= POISSON_MAX_LAMBDA) {
            return Err(Error::InvalidDistribution(format!("poisson lambda = {lambda}")));
        }
        let mut mass = Vec::with_capacity(max as usize + 1);
        let mut p = (-lambda).exp();
        for k in 0..=max {
            mass.push(p);
            p *= lambda / (k + 1) as f64;
        }
        let total: f64 = mass.iter().sum();
        for m in &mut mass {
            *m /= total;
        }
        Self::finite_trimmed((0..=max).map(|k| k as f64).collect(), mass)
    }

    /// P(X = k) proportional to k^{-tau} on {kmin, ..., kmax}.
    pub fn zipf(tau: f64, kmin: u64, kmax: u64) -> Result<Self> {
        if kmin == 0 || kmin > kmax || !tau.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "zipf needs 1 <= kmin <= kmax, got {kmin}..{kmax}"
            )));
        }
        let support: Vec<f64> = (kmin..=kmax).map(|k| k as f64).collect();
        let w: Vec<f64> = support.iter().map(|k| k.powf(-tau)).collect();
        let total: f64 = w.iter().sum();
        Self::finite_trimmed(support, w.into_iter().map(|x| x / total).collect())
    }

    fn finite_trimmed(support: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        let (s, m): (Vec<f64>, Vec<f64>) = support
            .into_iter()
            .zip(mass)
            .filter(|(_, m)| *m > 0.0)
            .unzip();
        let total: f64 = m.iter().sum();
        Self::finite(s, m.into_iter().map(|x| x / total).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDistribution(msg));
        match *self {
            Self::Point { value } if !value.is_finite() => bad(format!("point at {value}")),
            Self::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                bad(format!("uniform on ({lo}, {hi})"))
            }
            Self::Geometric { p, .. } if !(p > 0.0 && p <= 1.0) => bad(format!("geometric p = {p}")),
            Self::Poisson { lambda } if !(lambda >= 0.0 && lambda <= POISSON_MAX_LAMBDA) => {
                bad(format!("poisson lambda = {lambda} (supported range [0, {POISSON_MAX_LAMBDA}])"))
            }
            Self::Pareto { alpha, scale } if !(alpha > 0.0 && scale > 0.0) => {
                bad(format!("pareto alpha = {alpha}, scale = {scale}"))
            }
            _ => Ok(()),
        }
    }

    /// Pseudo-inverse CDF at u in (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Self::Point { value } => *value,
            Self::Finite { measure } => measure.quantile(u),
            Self::Uniform { lo, hi } => lo + u * (hi - lo),
            Self::Geometric { p, start } => {
                if *p >= 1.0 {
                    return *start as f64;
                }
                // smallest k with 1 - (1-p)^{k+1} >= u
                let k = ((-u).ln_1p() / (-p).ln_1p()).ceil() - 1.0;
                *start as f64 + k.max(0.0)
            }
            Self::Poisson { lambda } => poisson_quantile(*lambda, u),
            Self::Pareto { alpha, scale } => scale * (1.0 - u).powf(-1.0 / alpha),
        }
    }

    pub fn mean(&self) -> Option<f64> {
        Some(match self {
            Self::Point { value } => *value,
            Self::Finite { measure } => measure.mean(),
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::Geometric { p, start } => *start as f64 + (1.0 - p) / p,
            Self::Poisson { lambda } => *lambda,
            Self::Pareto { alpha, scale } => {
                if *alpha <= 1.0 {
                    return None;
                }
                alpha * scale / (alpha - 1.0)
            }
        })
    }

    pub fn mean_abs(&self) -> Option<f64> {
        match self {
            Self::Point { value } => Some(value.abs()),
            Self::Finite { measure } => Some(measure.mean_abs()),
            Self::Uniform { lo, hi } => Some(if *lo >= 0.0 || *hi <= 0.0 {
                (0.5 * (lo + hi)).abs()
            } else {
                (lo * lo + hi * hi) / (2.0 * (hi - lo))
            }),
            _ => self.mean(),
        }
    }

    /// E|X|^p, summed or integrated exactly where possible.
    pub fn abs_moment(&self, p: f64) -> Option<f64> {
        match self {
            Self::Point { value } => Some(value.abs().powf(p)),
            Self::Finite { measure } => Some(measure.atoms().map(|(x, m)| m * x.abs().powf(p)).sum()),
            Self::Uniform { lo, hi } => {
                // integral of |x|^p over (lo, hi), divided by the length
                let prim = |x: f64| x.signum() * x.abs().powf(p + 1.0) / (p + 1.0);
                Some((prim(*hi) - prim(*lo)) / (hi - lo))
            }
            Self::Geometric { .. } | Self::Poisson { .. } => {
                let mean = self.mean().unwrap_or(0.0);
                let mut total = 0.0;
                for k in 0..10_000_000usize {
                    let x = self.count_value(k);
                    let term = self.count_pmf(k) * x.powf(p);
                    total += term;
                    if x > mean + 1.0 && term <= 1e-18 * total.max(1e-300) {
                        break;
                    }
                }
                Some(total)
            }
            Self::Pareto { alpha, scale } => {
                (p < *alpha).then(|| alpha * scale.powf(p) / (alpha - p))
            }
        }
    }

    fn count_value(&self, k: usize) -> f64 {
        match self {
            Self::Geometric { start, .. } => (*start as usize + k) as f64,
            _ => k as f64,
        }
    }

    fn count_pmf(&self, k: usize) -> f64 {
        match self {
            Self::Geometric { p, .. } => p * (1.0 - p).powi(k as i32),
            Self::Poisson { lambda } => {
                if *lambda == 0.0 {
                    return if k == 0 { 1.0 } else { 0.0 };
                }
                (k as f64 * lambda.ln() - lambda - ln_factorial(k as u64)).exp()
            }
            _ => unreachable!("count_pmf on a non-count law"),
        }
    }

    /// True when every draw is a nonnegative integer (admissible as N).
    pub fn is_count(&self) -> bool {
        match self {
            Self::Point { value } => *value >= 0.0 && value.fract() == 0.0,
            Self::Finite { measure } => measure.is_integer_supported(),
            Self::Geometric { .. } | Self::Poisson { .. } => true,
            Self::Uniform { .. } | Self::Pareto { .. } => false,
        }
    }

    pub fn as_discrete(&self) -> Option<DiscreteMeasure> {
        match self {
            Self::Point { value } => Some(DiscreteMeasure::dirac(*value)),
            Self::Finite { measure } => Some(measure.clone()),
            _ => None,
        }
    }

    pub fn is_finite_support(&self) -> bool {
        matches!(self, Self::Point { .. } | Self::Finite { .. })
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            Self::Point { value } => *value >= 0.0,
            Self::Finite { measure } => measure.support()[0] >= 0.0,
            Self::Uniform { lo, .. } => *lo >= 0.0,
            _ => true,
        }
    }

    /// P(X >= k) for a count law.
    pub fn tail_ge(&self, k: u64) -> f64 {
        match self {
            Self::Point { value } => f64::from(u8::from(*value >= k as f64)),
            Self::Finite { measure } => {
                measure.atoms().filter(|(x, _)| *x >= k as f64).map(|(_, m)| m).sum()
            }
            Self::Geometric { p, start } => {
                if k <= *start {
                    1.0
                } else {
                    (1.0 - p).powi((k - start) as i32)
                }
            }
            Self::Poisson { .. } => {
                let below: f64 = (0..k as usize).map(|i| self.count_pmf(i)).sum();
                (1.0 - below).max(0.0)
            }
            Self::Uniform { lo, hi } => ((hi - k as f64) / (hi - lo)).clamp(0.0, 1.0),
            Self::Pareto { alpha, scale } => {
                if (k as f64) <= *scale {
                    1.0
                } else {
                    (scale / k as f64).powf(*alpha)
                }
            }
        }
    }

    /// Largest value that can be drawn, if bounded.
    pub fn upper_bound(&self) -> Option<f64> {
        match self {
            Self::Point { value } => Some(*value),
            Self::Finite { measure } => measure.support().last().copied(),
            Self::Uniform { hi, .. } => Some(*hi),
            _ => None,
        }
    }
}

fn ln_factorial(k: u64) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if p == 0.0 {
        return f64::from(u8::from(k == 0));
    }
    if p == 1.0 {
        return f64::from(u8::from(k == n));
    }
    let ln = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
        + k as f64 * p.ln()
        + (n - k) as f64 * (1.0 - p).ln();
    ln.exp()
}

fn poisson_quantile(lambda: f64, u: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let mut p = (-lambda).exp();
    let mut cdf = p;
    let mut k = 0u64;
    while cdf < u {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
        if p == 0.0 && k as f64 > lambda {
            // accumulated rounding left cdf a hair below u in the far tail
            break;
        }
    }
    k as f64
}
