//! Small Monte Carlo summaries shared by the experiment modules.

/// Sample mean and its standard error (n - 1 denominator).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            se: 0.0,
            n: 0,
        }
    }
}

/// Welford accumulator; order-dependent only through floating rounding.
#[derive(Debug, Clone, Default)]
pub struct Accumulator {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn finish(&self) -> MeanSe {
        let se = if self.n > 1 {
            (self.m2 / (self.n as f64 - 1.0) / self.n as f64).sqrt()
        } else {
            0.0
        };
        MeanSe {
            mean: self.mean,
            se,
            n: self.n,
        }
    }
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    let mut acc = Accumulator::new();
    for &x in xs {
        acc.push(x);
    }
    acc.finish()
}

pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "median of an empty slice");
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Outcome of the finite-sample "curve tends to zero" policy: the median at the
/// largest grid point is at most half the median at the smallest one and at
/// most three times the same-law baseline median.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TrendVerdict {
    pub first_median: f64,
    pub last_median: f64,
    pub baseline_median: Option<f64>,
    pub halves: bool,
    pub near_baseline: bool,
}

impl TrendVerdict {
    pub fn passed(&self) -> bool {
        self.halves && self.near_baseline
    }
}

pub fn trend_test(first: &[f64], last: &[f64], baseline: Option<&[f64]>) -> TrendVerdict {
    let first_median = median(first);
    let last_median = median(last);
    let baseline_median = baseline.map(median);
    TrendVerdict {
        first_median,
        last_median,
        baseline_median,
        halves: last_median <= 0.5 * first_median,
        near_baseline: baseline_median.map_or(true, |b| last_median <= 3.0 * b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_se_matches_closed_form() {
        let m = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m.mean - 2.5).abs() < 1e-15);
        // sample variance 5/3, se = sqrt(5/3 / 4)
        assert!((m.se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_sample_has_zero_se() {
        assert_eq!(mean_se(&[0.2; 10]).se, 0.0);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn trend_policy() {
        let v = trend_test(&[1.0, 1.2, 0.8], &[0.1, 0.2, 0.15], Some(&[0.1, 0.1]));
        assert!(v.passed());
        let v = trend_test(&[1.0], &[0.6], None);
        assert!(!v.halves);
    }
}
